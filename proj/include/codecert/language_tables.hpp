// SPDX-License-Identifier: Apache-2.0
// Mirrors data/*.txt; tests/test_code_model.cpp checks the two stay in sync.
#pragma once

#include <array>
#include <string_view>

namespace codecert::tables {

inline constexpr std::array<std::string_view, 55> kCKeywords{
    "auto", "break", "case", "char", "const", "continue", "default", "do", "double", "else",
    "enum", "extern", "float", "for", "goto", "if", "inline", "int", "long", "register",
    "restrict", "return", "short", "signed", "sizeof", "static", "struct", "switch", "typedef",
    "union", "unsigned", "void", "volatile", "while", "_Alignas", "_Alignof", "_Atomic",
    "_Bool", "_Complex", "_Generic", "_Imaginary", "_Noreturn", "_Static_assert",
    "_Thread_local", "alignas", "alignof", "bool", "constexpr", "false", "nullptr",
    "static_assert", "thread_local", "true", "typeof", "typeof_unqual",
};

inline constexpr std::array<std::string_view, 58> kJavaKeywords{
    "abstract", "assert", "boolean", "break", "byte", "case", "catch", "char", "class", "const",
    "continue", "default", "do", "double", "else", "enum", "extends", "final", "finally",
    "float", "for", "goto", "if", "implements", "import", "instanceof", "int", "interface",
    "long", "native", "new", "package", "private", "protected", "public", "return", "short",
    "static", "strictfp", "super", "switch", "synchronized", "this", "throw", "throws",
    "transient", "try", "void", "volatile", "while", "true", "false", "null", "var", "record",
    "yield", "sealed", "permits",
};

inline constexpr std::array<std::string_view, 128> kCDenylist{
    "include", "define", "undef", "ifdef", "ifndef", "endif", "elif", "pragma", "error", "line",
    "defined", "main", "NULL", "EOF", "FILE", "size_t", "ssize_t", "ptrdiff_t", "intptr_t",
    "uintptr_t", "int8_t", "int16_t", "int32_t", "int64_t", "uint8_t", "uint16_t", "uint32_t",
    "uint64_t", "stdin", "stdout", "stderr", "errno", "va_list", "va_start", "va_end", "va_arg",
    "va_copy", "offsetof", "printf", "fprintf", "sprintf", "snprintf", "vprintf", "vfprintf",
    "vsnprintf", "scanf", "sscanf", "fscanf", "puts", "fputs", "fgets", "gets", "putchar",
    "getchar", "fputc", "fgetc", "getc", "putc", "malloc", "calloc", "realloc", "free",
    "memcpy", "memmove", "memset", "memcmp", "memchr", "strlen", "strcpy", "strncpy", "strcat",
    "strncat", "strcmp", "strncmp", "strchr", "strrchr", "strstr", "strdup", "strndup",
    "strtok", "atoi", "atol", "atof", "strtol", "strtoul", "strtoll", "strtoull", "strtod",
    "abs", "labs", "exit", "abort", "assert", "fopen", "fclose", "fread", "fwrite", "fseek",
    "ftell", "rewind", "fflush", "feof", "ferror", "perror", "remove", "rename", "qsort",
    "bsearch", "rand", "srand", "time", "clock", "sqrt", "pow", "exp", "log", "sin", "cos",
    "tan", "floor", "ceil", "fabs", "isalpha", "isdigit", "isspace", "isalnum", "toupper",
    "tolower",
};

inline constexpr std::array<std::string_view, 87> kJavaDenylist{
    "java", "javax", "lang", "util", "io", "String", "System", "out", "err", "in", "println",
    "print", "printf", "format", "Object", "Integer", "Long", "Double", "Float", "Boolean",
    "Character", "Byte", "Short", "Math", "Number", "Void", "List", "ArrayList", "LinkedList",
    "Map", "HashMap", "TreeMap", "Set", "HashSet", "TreeSet", "Collection", "Collections",
    "Arrays", "Iterator", "Iterable", "Scanner", "StringBuilder", "StringBuffer", "Exception",
    "RuntimeException", "IOException", "IllegalArgumentException", "IllegalStateException",
    "NullPointerException", "Throwable", "Error", "Thread", "Runnable", "Override",
    "Deprecated", "SuppressWarnings", "File", "InputStream", "OutputStream", "Reader", "Writer",
    "BufferedReader", "InputStreamReader", "FileReader", "FileWriter", "main", "length", "size",
    "get", "set", "put", "add", "remove", "contains", "equals", "hashCode", "toString",
    "valueOf", "parseInt", "parseLong", "parseDouble", "charAt", "substring", "indexOf",
    "isEmpty", "append", "close",
};

}  // namespace codecert::tables

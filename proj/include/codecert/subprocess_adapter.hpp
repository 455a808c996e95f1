// SPDX-License-Identifier: Apache-2.0
#pragma once

// Child-process transport. The child reads one JSON request per line on
// stdin, {"id":..., "code":..., "language":...}, and answers one
// {"id":..., "label":int} per line on stdout, in any order. A blank line
// from the parent asks it to exit.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "codecert/adapters.hpp"
#include "codecert/error.hpp"
#include "json.hpp"

namespace codecert {

struct SubprocessOptions {
  std::string command;  // run through /bin/sh -c
  LabelSpace labels{{0, 1}, {}};
  std::size_t batch_limit = 64;
  std::chrono::milliseconds timeout{30000};
  int max_attempts = 3;
  std::chrono::milliseconds backoff{100};
};

namespace detail {

inline ClassifyResult parse_result_line(const std::string& line) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    throw MalformedResponseError("response line is not JSON: " + line.substr(0, 120));
  }
  if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("label") ||
      !j["label"].is_number_integer())
    throw MalformedResponseError("response needs a string id and an integer label: " +
                                 line.substr(0, 120));
  return {j["id"].get<std::string>(), j["label"].get<Label>()};
}

inline void ignore_sigpipe() {
  static const bool installed = [] {
    struct sigaction sa {};
    sa.sa_handler = SIG_IGN;
    sigaction(SIGPIPE, &sa, nullptr);
    return true;
  }();
  (void)installed;
}

}  // namespace detail

/// Serializes requests over a single long-lived child. Transport failures
/// (dead child, timeout) restart the child and retry with exponential
/// backoff; malformed answers fail immediately.
class SubprocessAdapter final : public ClassifierAdapter {
 public:
  explicit SubprocessAdapter(SubprocessOptions options) : options_(std::move(options)) {
    if (options_.command.empty()) throw UsageError("subprocess adapter needs a command");
    detail::ignore_sigpipe();
  }
  ~SubprocessAdapter() override { stop(true); }

  SubprocessAdapter(const SubprocessAdapter&) = delete;
  SubprocessAdapter& operator=(const SubprocessAdapter&) = delete;

  AdapterKind kind() const noexcept override { return AdapterKind::subprocess; }
  std::string describe() const override { return "subprocess:" + options_.command; }
  const LabelSpace& label_space() const noexcept override { return options_.labels; }
  std::size_t batch_limit() const noexcept override { return options_.batch_limit; }

  std::vector<ClassifyResult> classify_chunk(std::span<const ClassifyItem> items) override {
    std::lock_guard lock(mutex_);
    auto delay = options_.backoff;
    for (int attempt = 1;; ++attempt) {
      try {
        if (pid_ <= 0) start();
        return exchange(items);
      } catch (const TransportError&) {
        stop(false);
        if (attempt >= options_.max_attempts) throw;
        std::this_thread::sleep_for(delay);
        delay *= 2;
      } catch (const MalformedResponseError&) {
        stop(false);  // stream position is unknown after a contract violation
        throw;
      }
    }
  }

 private:
  void start() {
    int in_pipe[2];
    int out_pipe[2];
    if (pipe2(in_pipe, O_CLOEXEC) != 0) throw TransportError("pipe: " + std::string(std::strerror(errno)));
    if (pipe2(out_pipe, O_CLOEXEC) != 0) {
      ::close(in_pipe[0]);
      ::close(in_pipe[1]);
      throw TransportError("pipe: " + std::string(std::strerror(errno)));
    }
    const pid_t pid = fork();
    if (pid < 0) {
      for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
      throw TransportError("fork: " + std::string(std::strerror(errno)));
    }
    if (pid == 0) {
      dup2(in_pipe[0], STDIN_FILENO);
      dup2(out_pipe[1], STDOUT_FILENO);
      execl("/bin/sh", "sh", "-c", options_.command.c_str(), static_cast<char*>(nullptr));
      _exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    pid_ = pid;
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
    fcntl(to_child_, F_SETFL, fcntl(to_child_, F_GETFL) | O_NONBLOCK);
    fcntl(from_child_, F_SETFL, fcntl(from_child_, F_GETFL) | O_NONBLOCK);
    buffer_.clear();
  }

  void stop(bool graceful) {
    if (pid_ <= 0) return;
    if (graceful && to_child_ >= 0) {
      const char newline = '\n';
      (void)!::write(to_child_, &newline, 1);
    }
    if (to_child_ >= 0) ::close(to_child_);
    to_child_ = -1;
    bool reaped = false;
    if (graceful) {
      for (int i = 0; i < 100 && !reaped; ++i) {
        if (waitpid(pid_, nullptr, WNOHANG) == pid_)
          reaped = true;
        else
          std::this_thread::sleep_for(std::chrono::milliseconds(10));
      }
    }
    if (!reaped) {
      kill(pid_, SIGKILL);
      waitpid(pid_, nullptr, 0);
    }
    if (from_child_ >= 0) ::close(from_child_);
    from_child_ = -1;
    pid_ = -1;
    buffer_.clear();
  }

  // Writes every request and reads one answer line per request, polling
  // both pipes so neither side can block on a full buffer.
  std::vector<ClassifyResult> exchange(std::span<const ClassifyItem> items) {
    std::string outgoing;
    for (const auto& item : items) {
      nlohmann::json j{{"id", item.id}, {"code", item.code}, {"language", item.language}};
      outgoing += j.dump();
      outgoing.push_back('\n');
    }
    std::size_t written = 0;
    std::vector<ClassifyResult> results;
    const auto deadline = std::chrono::steady_clock::now() + options_.timeout;

    while (results.size() < items.size()) {
      take_lines(results, items.size());
      if (results.size() >= items.size()) break;
      const auto now = std::chrono::steady_clock::now();
      if (now >= deadline) throw TransportError("subprocess timed out");
      const auto remaining =
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();

      pollfd fds[2] = {{from_child_, POLLIN, 0}, {to_child_, POLLOUT, 0}};
      const nfds_t count = written < outgoing.size() ? 2 : 1;
      const int ready = ::poll(fds, count, static_cast<int>(std::max<long long>(1, remaining)));
      if (ready < 0) {
        if (errno == EINTR) continue;
        throw TransportError("poll: " + std::string(std::strerror(errno)));
      }
      if (count == 2 && (fds[1].revents & (POLLOUT | POLLERR | POLLHUP))) {
        const ssize_t n = ::write(to_child_, outgoing.data() + written, outgoing.size() - written);
        if (n < 0 && errno != EAGAIN && errno != EINTR)
          throw TransportError("subprocess closed its input: " + std::string(std::strerror(errno)));
        if (n > 0) written += static_cast<std::size_t>(n);
      }
      if (fds[0].revents & (POLLIN | POLLHUP | POLLERR)) {
        char chunk[4096];
        const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
        if (n == 0) throw TransportError("subprocess exited");
        if (n < 0 && errno != EAGAIN && errno != EINTR)
          throw TransportError("read: " + std::string(std::strerror(errno)));
        if (n > 0) buffer_.append(chunk, static_cast<std::size_t>(n));
      }
    }
    return results;
  }

  void take_lines(std::vector<ClassifyResult>& results, std::size_t wanted) {
    std::size_t eol;
    while (results.size() < wanted && (eol = buffer_.find('\n')) != std::string::npos) {
      std::string line = buffer_.substr(0, eol);
      buffer_.erase(0, eol + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      results.push_back(detail::parse_result_line(line));
    }
  }

  SubprocessOptions options_;
  std::mutex mutex_;
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

}  // namespace codecert

// SPDX-License-Identifier: Apache-2.0
// Certifies one C snippet against the identifier-presence toy classifier
// and checks the radius by enumerating every adversary within it.

#include <iostream>

#include "codecert/certification.hpp"
#include "codecert/oracle.hpp"

int main() {
  using namespace codecert;
  const auto snippet = CodeSnippet::parse(
      "int copy(char *dst, const char *src, int len) {\n"
      "  int i;\n"
      "  for (i = 0; i < len; i++) dst[i] = src[i];\n"
      "  return i;\n"
      "}\n",
      Language::c);

  SmoothingConfig config;
  config.mode = SmoothingMode::mask;
  config.perturb_fraction = 0.6;
  config.n_samples = 1000;

  IdentifierPresenceClassifier model(WordSet{"dst", "src", "len", "i"});
  const auto cert = certify(snippet, 1, config, model, {"copy", 1});
  std::cout << "h=" << cert.h << " k=" << cert.k << " votes=" << cert.n_c << "/" << cert.n
            << " lower=" << cert.bounds->lower << " radius=" << cert.radius.value_or(0) << "\n";

  const auto sweep = oracle::soundness_sweep(snippet, config, model);
  std::cout << "exact-tally radius=" << sweep.certificate.radius.value_or(0)
            << " adversaries checked=" << sweep.adversaries << " violations=" << sweep.violations
            << "\n";
  return sweep.violations == 0 ? 0 : 1;
}

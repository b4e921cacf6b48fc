// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lrc {

enum class Errc {
  format,
  io,
  domain,
  shape,
  degenerate,
  divergence,
  checkpoint,
  pairing,
  usage,
  placement,
  no_signal,
  undefined_metric,
  empty_grid,
};

std::string_view to_string(Errc code) noexcept;

/// Every failure raised by the library carries one of the Errc categories so
/// callers (and the CLI exit-code mapping) can branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  [[nodiscard]] Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace lrc

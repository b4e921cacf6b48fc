// SPDX-License-Identifier: Apache-2.0
#include "lrc/error.hpp"

namespace lrc {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::format: return "format error";
    case Errc::io: return "I/O error";
    case Errc::domain: return "domain error";
    case Errc::shape: return "shape error";
    case Errc::degenerate: return "degenerate input";
    case Errc::divergence: return "training divergence";
    case Errc::checkpoint: return "checkpoint error";
    case Errc::pairing: return "pairing error";
    case Errc::usage: return "usage error";
    case Errc::placement: return "placement error";
    case Errc::no_signal: return "no signal";
    case Errc::undefined_metric: return "undefined metric";
    case Errc::empty_grid: return "empty grid";
  }
  return "error";
}

}  // namespace lrc

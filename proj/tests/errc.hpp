// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <doctest.h>

#include "lrc/error.hpp"

/// Checks that `expr` throws lrc::Error with the given category.
#define CHECK_ERRC(expr, errc)                                  \
  do {                                                          \
    bool lrc_thrown_ = false;                                   \
    try {                                                       \
      (void)(expr);                                             \
    } catch (const ::lrc::Error& e) {                           \
      lrc_thrown_ = true;                                       \
      CHECK_MESSAGE(e.code() == (errc), "got ", e.what());      \
    }                                                           \
    CHECK_MESSAGE(lrc_thrown_, "expected an lrc::Error");       \
  } while (0)

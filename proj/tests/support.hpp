#pragma once

#include <doctest.h>

#include "emergence/errors.hpp"

// Runs `expr` and checks it throws emergence::Error with the given code.
#define CHECK_ERROR_CODE(expr, expected)                                   \
  do {                                                                     \
    bool thrown_ = false;                                                  \
    try {                                                                  \
      (void)(expr);                                                        \
    } catch (const ::emergence::Error& e_) {                               \
      thrown_ = true;                                                      \
      CHECK_MESSAGE(e_.code() == (expected), e_.what());                   \
    }                                                                      \
    CHECK_MESSAGE(thrown_, "expected " << ::emergence::error_code_name(expected)); \
  } while (0)

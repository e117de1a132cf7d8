#pragma once

// libtorch defines glog-style CHECK macros; doctest's must win in test files.
#include <torch/torch.h>

#undef CHECK
#undef CHECK_EQ
#undef CHECK_NE
#undef CHECK_LT
#undef CHECK_LE
#undef CHECK_GT
#undef CHECK_GE
#undef CHECK_NOTNULL
#undef REQUIRE

#include <doctest.h>

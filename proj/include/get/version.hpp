#pragma once

// The build system stamps GET_GIT_DESCRIBE from `git describe` at configure
// time; source builds outside a checkout fall back to the release tag.
#ifndef GET_GIT_DESCRIBE
#define GET_GIT_DESCRIBE "v0.1.0-0-g0000000"
#endif

namespace get {

inline const char* version_string() { return GET_GIT_DESCRIBE; }

}  // namespace get

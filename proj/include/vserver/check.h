// Copyright 2026 The Validation Server Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef VSERVER_CHECK_H_
#define VSERVER_CHECK_H_

#include <cstdio>
#include <cstdlib>

// Aborts on a violated contract. Used for programmer errors only; anything a
// caller can trigger with bad input is reported through absl::Status.
#define VSERVER_CHECK(cond, msg)                                          \
  do {                                                                    \
    if (!(cond)) {                                                        \
      std::fprintf(stderr, "%s:%d: check failed: %s (%s)\n", __FILE__,    \
                   __LINE__, #cond, msg);                                 \
      std::abort();                                                       \
    }                                                                     \
  } while (false)

#endif  // VSERVER_CHECK_H_

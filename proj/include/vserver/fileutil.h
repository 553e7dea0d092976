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

#ifndef VSERVER_FILEUTIL_H_
#define VSERVER_FILEUTIL_H_

#include <cstddef>
#include <string>
#include <string_view>

#include "absl/status/statusor.h"

namespace vserver {

absl::StatusOr<std::string> ReadFile(const std::string& path);

// Writes to a temporary sibling and renames it over `path`.
absl::Status WriteFileAtomic(const std::string& path, std::string_view content,
                             bool sync);

// One write(2) of `content` at the end of the file, then optional fsync.
absl::Status AppendToFile(const std::string& path, std::string_view content,
                          bool sync);

absl::Status TruncateFile(const std::string& path, std::size_t size);

absl::Status EnsureDirectory(const std::string& path);

bool FileExists(const std::string& path);

}  // namespace vserver

#endif  // VSERVER_FILEUTIL_H_

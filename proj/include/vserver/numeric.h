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

#ifndef VSERVER_NUMERIC_H_
#define VSERVER_NUMERIC_H_

#include <span>
#include <vector>

namespace vserver {

// Correctly rounded sum of doubles (Shewchuk's exact partials). Ledger
// totals must not drift with the number or order of debits: 100 debits of
// 0.1 sum to exactly 10.
class ExactSum {
 public:
  void Add(double x);
  double Value() const;

 private:
  std::vector<double> partials_;
};

double SumExactly(std::span<const double> values);

}  // namespace vserver

#endif  // VSERVER_NUMERIC_H_

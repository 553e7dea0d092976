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

#include "vserver/ledger.h"

#include <filesystem>
#include <sstream>
#include <random>
#include <thread>

#include "gmock/gmock.h"
#include "gtest/gtest.h"
#include "vserver/fileutil.h"

namespace vserver {
namespace {

using ::testing::HasSubstr;
using ::testing::UnorderedElementsAre;

class TempDir {
 public:
  TempDir() {
    path_ = std::filesystem::temp_directory_path() /
            ("ledger_test_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  std::string path() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

std::unique_ptr<Ledger> InMemory() {
  Ledger::Options options;
  options.clock = [] { return std::int64_t{1000}; };
  return *Ledger::Open(options);
}

std::string ApprovedProject(Ledger& ledger, const std::string& dataset = "d1") {
  Project p = *ledger.OpenProject("emily", "wages", dataset);
  EXPECT_TRUE(ledger.SetProjectStatus(p.project_id, "Approved").ok());
  return p.project_id;
}

TEST(Sha256Test, KnownVector) {
  EXPECT_EQ(Sha256Hex("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(Sha256Hex(""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(LedgerTest, CommittedTotalsAddUp) {
  auto ledger = InMemory();
  const std::string p = ApprovedProject(*ledger);
  auto result = ledger->ReserveAndCommit(
      p, {{"q1", 0.3}, {"q2", 0.2}, {"q3", 0.5}}, [] { return absl::OkStatus(); });
  ASSERT_TRUE(result.ok()) << result.status();
  EXPECT_DOUBLE_EQ(*ledger->TotalSpent(p), 1.0);
  EXPECT_TRUE(ledger->IsCommitted(p, "q2"));
}

TEST(LedgerTest, DoubleCommitRejectedAndLedgerUnchanged) {
  auto ledger = InMemory();
  const std::string p = ApprovedProject(*ledger);
  ASSERT_TRUE(ledger->ReserveAndCommit(p, {{"q1", 0.3}}, [] {
    return absl::OkStatus();
  }).ok());
  const std::size_t before = ledger->Entries().size();
  auto again = ledger->Reserve(p, {{"q1", 0.3}});
  EXPECT_EQ(again.status().code(), absl::StatusCode::kAlreadyExists);
  EXPECT_EQ(ledger->Entries().size(), before);
  EXPECT_DOUBLE_EQ(*ledger->TotalSpent(p), 0.3);
}

TEST(LedgerTest, ReserveIsAllOrNothing) {
  auto ledger = InMemory();
  const std::string p = ApprovedProject(*ledger);
  ASSERT_TRUE(ledger->Reserve(p, {{"q1", 0.1}}).ok());
  auto batch = ledger->Reserve(p, {{"q2", 0.1}, {"q1", 0.1}});
  EXPECT_FALSE(batch.ok());
  EXPECT_THAT(ledger->LiveReservations(p), UnorderedElementsAre("q1"));
}

TEST(LedgerTest, ReserveRequiresApproval) {
  auto ledger = InMemory();
  Project p = *ledger->OpenProject("emily", "wages", "d1");
  auto r = ledger->Reserve(p.project_id, {{"q1", 0.1}});
  EXPECT_EQ(r.status().code(), absl::StatusCode::kFailedPrecondition);
  EXPECT_EQ(ledger->Reserve("nope", {{"q1", 0.1}}).status().code(),
            absl::StatusCode::kNotFound);
}

TEST(LedgerTest, RejectsNonPositiveEpsilon) {
  auto ledger = InMemory();
  const std::string p = ApprovedProject(*ledger);
  EXPECT_FALSE(ledger->Reserve(p, {{"q1", 0.0}}).ok());
  EXPECT_FALSE(ledger->Reserve(p, {{"q1", -1.0}}).ok());
  EXPECT_FALSE(ledger->Reserve(p, {{"q1", std::nan("")}}).ok());
}

TEST(LedgerTest, VoidedAndReservedExcludedFromTotals) {
  auto ledger = InMemory();
  const std::string p = ApprovedProject(*ledger);
  auto failed = ledger->ReserveAndCommit(p, {{"q1", 0.4}}, [] {
    return absl::InternalError("mechanism failed");
  });
  EXPECT_THAT(failed.status().message(), HasSubstr("mechanism failed"));
  ASSERT_TRUE(ledger->Reserve(p, {{"q2", 0.7}}).ok());
  EXPECT_DOUBLE_EQ(*ledger->TotalSpent(p), 0.0);
  // A voided query may be reserved again.
  EXPECT_TRUE(ledger->ReserveAndCommit(p, {{"q1", 0.4}}, [] {
    return absl::OkStatus();
  }).ok());
  EXPECT_DOUBLE_EQ(*ledger->TotalSpent(p), 0.4);
}

TEST(LedgerTest, CommitWithoutReservationFails) {
  auto ledger = InMemory();
  const std::string p = ApprovedProject(*ledger);
  EXPECT_EQ(ledger->Commit(p, {"q1"}).status().code(),
            absl::StatusCode::kFailedPrecondition);
}

TEST(LedgerTest, OpenProjectIdsDistinctAndTitleRequired) {
  auto ledger = InMemory();
  Project a = *ledger->OpenProject("emily", "wages", "d1");
  Project b = *ledger->OpenProject("emily", "wages", "d1");
  EXPECT_NE(a.project_id, b.project_id);
  EXPECT_EQ(a.status, "Draft");
  EXPECT_EQ(ledger->OpenProject("emily", "  ", "d1").status().code(),
            absl::StatusCode::kInvalidArgument);
  EXPECT_FALSE(ledger->OpenProject("", "t", "d1").ok());
}

TEST(LedgerTest, GlobalReportAggregatesByDataset) {
  auto ledger = InMemory();
  const std::string a = ApprovedProject(*ledger, "d1");
  const std::string b = ApprovedProject(*ledger, "d1");
  const std::string c = ApprovedProject(*ledger, "d2");
  auto ok = [] { return absl::OkStatus(); };
  ASSERT_TRUE(ledger->ReserveAndCommit(a, {{"q", 1.0}}, ok).ok());
  ASSERT_TRUE(ledger->ReserveAndCommit(b, {{"q", 2.5}}, ok).ok());
  ASSERT_TRUE(ledger->ReserveAndCommit(c, {{"q", 0.25}}, ok).ok());
  Project r = *ledger->OpenProject("frank", "rejected", "d1");
  ASSERT_TRUE(ledger->SetProjectStatus(r.project_id, "Rejected").ok());
  GlobalReport report = ledger->Report();
  ASSERT_EQ(report.datasets.size(), 2u);
  EXPECT_EQ(report.datasets[0].dataset_id, "d1");
  EXPECT_DOUBLE_EQ(report.datasets[0].epsilon, 3.5);
  EXPECT_EQ(report.datasets[0].approved, 2u);
  EXPECT_EQ(report.datasets[0].rejected, 1u);
  EXPECT_DOUBLE_EQ(report.grand_total, 3.75);
  EXPECT_DOUBLE_EQ(ledger->DatasetSpent("d2"), 0.25);
}

TEST(LedgerTest, EmptyReport) {
  auto ledger = InMemory();
  GlobalReport report = ledger->Report();
  EXPECT_TRUE(report.datasets.empty());
  EXPECT_EQ(report.grand_total, 0.0);
}

TEST(LedgerTest, ConcurrentCommitsSumExactly) {
  auto ledger = InMemory();
  const std::string p = ApprovedProject(*ledger);
  std::vector<std::thread> threads;
  for (int t = 0; t < 10; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 10; ++i) {
        const std::string q = "q" + std::to_string(t * 10 + i);
        EXPECT_TRUE(ledger->ReserveAndCommit(p, {{q, 0.1}}, [] {
          return absl::OkStatus();
        }).ok());
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(*ledger->TotalSpent(p), 10.0);
  auto entries = ledger->Entries();
  for (std::size_t i = 1; i < entries.size(); ++i) {
    EXPECT_EQ(entries[i].prev_digest, entries[i - 1].digest);
  }
}

// Property: per-project totals equal an independent scan of the raw file,
// and the grand total equals the sum of dataset totals.
TEST(LedgerTest, ConservationAgainstIndependentScan) {
  TempDir dir;
  Ledger::Options options;
  options.directory = dir.path();
  options.sync = false;
  auto ledger = *Ledger::Open(options);
  std::mt19937_64 rng(7);
  std::vector<std::string> projects;
  for (int i = 0; i < 6; ++i) {
    projects.push_back(ApprovedProject(*ledger, i % 2 ? "d1" : "d2"));
  }
  for (int i = 0; i < 300; ++i) {
    const std::string& p = projects[rng() % projects.size()];
    const double eps = 0.01 * (1 + rng() % 50);
    const bool fail = rng() % 4 == 0;
    (void)ledger->ReserveAndCommit(p, {{"q" + std::to_string(i), eps}}, [&] {
      return fail ? absl::InternalError("x") : absl::OkStatus();
    });
  }
  // Scan: the last phase of each (project, query) decides.
  std::string text = *ReadFile(ledger->ledger_path());
  std::map<std::pair<std::string, std::string>, std::pair<std::string, double>> last;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    auto field = [&](const std::string& key) {
      const std::size_t at = line.find("\"" + key + "\":") + key.size() + 3;
      return line.substr(at, line.find_first_of(",}", at) - at);
    };
    auto unquote = [](std::string s) { return s.substr(1, s.size() - 2); };
    last[{unquote(field("project_id")), unquote(field("query_id"))}] = {
        unquote(field("phase")), std::stod(field("epsilon"))};
  }
  std::map<std::string, long double> scan;
  for (const auto& [key, value] : last) {
    if (value.first == "committed") scan[key.first] += value.second;
  }
  double grand = 0.0;
  for (const std::string& p : projects) {
    EXPECT_NEAR(*ledger->TotalSpent(p), static_cast<double>(scan[p]), 1e-12);
    grand += *ledger->TotalSpent(p);
  }
  GlobalReport report = ledger->Report();
  EXPECT_NEAR(report.grand_total,
              report.datasets[0].epsilon + report.datasets[1].epsilon, 1e-12);
  EXPECT_NEAR(report.grand_total, grand, 1e-12);
  EXPECT_TRUE(VerifyLedgerText(text).ok);
}

TEST(LedgerTest, PersistsAcrossReopen) {
  TempDir dir;
  Ledger::Options options;
  options.directory = dir.path();
  std::string p;
  {
    auto ledger = *Ledger::Open(options);
    p = ApprovedProject(*ledger);
    ASSERT_TRUE(ledger->ReserveAndCommit(p, {{"q1", 0.3}, {"q2", 0.2}}, [] {
      return absl::OkStatus();
    }).ok());
    ASSERT_TRUE(ledger->Reserve(p, {{"q3", 1.0}}).ok());
  }
  auto ledger = *Ledger::Open(options);
  EXPECT_EQ(ledger->GetProject(p)->status, "Approved");
  EXPECT_DOUBLE_EQ(*ledger->TotalSpent(p), 0.5);
  EXPECT_THAT(ledger->LiveReservations(p), UnorderedElementsAre("q3"));
  EXPECT_EQ(*ledger->RecoverDangling(std::chrono::milliseconds(0)), 1u);
  EXPECT_TRUE(ledger->LiveReservations(p).empty());
  EXPECT_DOUBLE_EQ(*ledger->TotalSpent(p), 0.5);
}

TEST(LedgerTest, AppendOnlyGrowth) {
  TempDir dir;
  Ledger::Options options;
  options.directory = dir.path();
  options.sync = false;
  auto ledger = *Ledger::Open(options);
  const std::string p = ApprovedProject(*ledger);
  std::string previous;
  for (int i = 0; i < 20; ++i) {
    (void)ledger->ReserveAndCommit(p, {{"q" + std::to_string(i), 0.1}}, [] {
      return absl::OkStatus();
    });
    std::string now = *ReadFile(ledger->ledger_path());
    ASSERT_GT(now.size(), previous.size());
    EXPECT_EQ(now.substr(0, previous.size()), previous);
    previous = now;
  }
}

TEST(LedgerTest, TamperDetectedWithPosition) {
  TempDir dir;
  Ledger::Options options;
  options.directory = dir.path();
  options.sync = false;
  std::string path;
  {
    auto ledger = *Ledger::Open(options);
    const std::string p = ApprovedProject(*ledger);
    for (int i = 0; i < 5; ++i) {
      ASSERT_TRUE(ledger->ReserveAndCommit(p, {{"q" + std::to_string(i), 0.5}}, [] {
        return absl::OkStatus();
      }).ok());
    }
    path = ledger->ledger_path();
  }
  std::string text = *ReadFile(path);
  ASSERT_TRUE(VerifyLedgerText(text).ok);
  EXPECT_EQ(VerifyLedgerText(text).entries, 10u);
  // Rewrite the epsilon of the fourth line.
  std::size_t line_start = 0;
  for (int i = 0; i < 3; ++i) line_start = text.find('\n', line_start) + 1;
  const std::size_t at = text.find("\"epsilon\":0.5", line_start);
  std::string tampered = text;
  tampered.replace(at, 13, "\"epsilon\":0.1");
  LedgerVerification v = VerifyLedgerText(tampered);
  EXPECT_FALSE(v.ok);
  EXPECT_EQ(v.break_line, 4u);
  EXPECT_THAT(v.message, HasSubstr("line 4"));

  ASSERT_TRUE(WriteFileAtomic(path, tampered, false).ok());
  auto reopened = Ledger::Open(options);
  EXPECT_EQ(reopened.status().code(), absl::StatusCode::kDataLoss);

  // Deleting a line also breaks the chain.
  std::string deleted = text;
  const std::size_t end = deleted.find('\n', line_start);
  deleted.erase(line_start, end - line_start + 1);
  EXPECT_EQ(VerifyLedgerText(deleted).break_line, 4u);
}

TEST(LedgerTest, TornFinalLineTruncatedOnOpen) {
  TempDir dir;
  Ledger::Options options;
  options.directory = dir.path();
  options.sync = false;
  std::string p;
  {
    auto ledger = *Ledger::Open(options);
    p = ApprovedProject(*ledger);
    ASSERT_TRUE(ledger->ReserveAndCommit(p, {{"q1", 0.5}}, [] {
      return absl::OkStatus();
    }).ok());
  }
  const std::string path = dir.path() + "/ledger.jsonl";
  ASSERT_TRUE(AppendToFile(path, "{\"entry_id\":3,\"eps", false).ok());
  EXPECT_FALSE(VerifyLedgerFile(path)->ok);
  auto ledger = Ledger::Open(options);
  ASSERT_TRUE(ledger.ok()) << ledger.status();
  EXPECT_DOUBLE_EQ(*(*ledger)->TotalSpent(p), 0.5);
  EXPECT_TRUE(VerifyLedgerFile(path)->ok);
}

}  // namespace
}  // namespace vserver

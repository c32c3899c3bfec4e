// Copyright 2026 The DRIFT Toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "drift/tasks.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "gtest/gtest.h"

namespace drift {
namespace {

int recount(const std::vector<int>& tokens, std::size_t grid_begin, int symbol) {
  int c = 0;
  for (std::size_t i = grid_begin; i < grid_begin + 9; ++i) {
    if (tokens[i] == symbol) ++c;
  }
  return c;
}

TEST(TasksTest, RunningSumChain) {
  EXPECT_EQ(running_sum_chain(std::vector<int>{3, 9}), (std::vector<int>{3, 2}));
  EXPECT_EQ(running_sum_chain(std::vector<int>{7}), (std::vector<int>{7}));
  EXPECT_EQ(running_sum_chain(std::vector<int>{5, 5, 5}), (std::vector<int>{5, 0, 5}));
}

TEST(TasksTest, MakeRLayout) {
  const Example ex = make_r(std::vector<int>{3, 9});
  const int p = tokens::kPlus;
  EXPECT_EQ(ex.tokens, (std::vector<int>{tokens::kTagR, tokens::kEq, p, 3, 3, p, 9, 2}));
  EXPECT_EQ(ex.mask, (std::vector<std::uint8_t>{0, 0, 0, 0, 1, 0, 0, 1}));
  EXPECT_EQ(ex.task, Task::R);
}

TEST(TasksTest, MakeVLayout) {
  std::vector<int> same(9, tokens::kSymbol0 + 1);
  const Example ex = make_v(same, tokens::kSymbol0 + 1, tokens::kSymbol0);
  std::vector<int> want = {tokens::kTagV};
  want.insert(want.end(), same.begin(), same.end());
  want.insert(want.end(), {tokens::kEq, tokens::kSymbol0 + 1, 9, tokens::kSymbol0, 0});
  EXPECT_EQ(ex.tokens, want);
  EXPECT_EQ(ex.mask, (std::vector<std::uint8_t>{0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 1}));
  EXPECT_EQ(ex.task, Task::V);
}

TEST(TasksTest, MakeVrChain) {
  std::vector<int> grid = {10, 10, 10, 10, 11, 11, 11, 11, 11};
  const Example ex = make_vr(grid, 10, 11);
  ASSERT_EQ(ex.tokens.size(), 17u);
  EXPECT_EQ(ex.tokens[10], tokens::kEq);
  EXPECT_EQ(std::vector<int>(ex.tokens.begin() + 11, ex.tokens.end()), (std::vector<int>{10, 4, 4, 11, 5, 9}));
  EXPECT_EQ(std::vector<std::uint8_t>(ex.mask.begin() + 11, ex.mask.end()),
            (std::vector<std::uint8_t>{0, 1, 1, 0, 1, 1}));
  EXPECT_EQ(ex.supervised(), 4u);
  const Example absent = make_vr(grid, 12, 13);
  EXPECT_EQ(std::vector<int>(absent.tokens.begin() + 11, absent.tokens.end()), (std::vector<int>{12, 0, 0, 13, 0, 0}));
}

TEST(TasksTest, GeneratedRMatchesOracle) {
  for (int k = 1; k <= tokens::kMaxSteps; ++k) {
    for (const auto& ex : gen_r(50, k, static_cast<std::uint64_t>(k))) {
      ASSERT_EQ(ex.tokens.size(), static_cast<std::size_t>(3 * k + 2));
      int s = 0;
      for (int i = 0; i < k; ++i) {
        const auto at = static_cast<std::size_t>(2 + 3 * i);
        EXPECT_EQ(ex.tokens[at], tokens::kPlus);
        s = (s + ex.tokens[at + 1]) % 10;
        EXPECT_EQ(ex.tokens[at + 2], s);
        EXPECT_FALSE(ex.mask[at + 1]);
        EXPECT_TRUE(ex.mask[at + 2]);
      }
      EXPECT_EQ(ex.supervised(), static_cast<std::size_t>(k));
    }
  }
  EXPECT_THROW(gen_r(1, 9, 1), ConfigError);
  EXPECT_THROW(gen_r(1, 0, 1), ConfigError);
}

TEST(TasksTest, GeneratedVMatchesRecount) {
  for (const auto& ex : gen_v(1000, 4)) {
    ASSERT_EQ(ex.tokens.size(), 15u);
    EXPECT_EQ(ex.tokens[0], tokens::kTagV);
    EXPECT_EQ(ex.tokens[10], tokens::kEq);
    EXPECT_EQ(ex.tokens[12], recount(ex.tokens, 1, ex.tokens[11]));
    EXPECT_EQ(ex.tokens[14], recount(ex.tokens, 1, ex.tokens[13]));
  }
}

TEST(TasksTest, GeneratedVrMatchesCountThenSum) {
  for (const auto& ex : gen_vr(1000, 5)) {
    ASSERT_EQ(ex.tokens.size(), 17u);
    EXPECT_EQ(ex.tokens[0], tokens::kTagVR);
    const int c1 = recount(ex.tokens, 1, ex.tokens[11]);
    const int c2 = recount(ex.tokens, 1, ex.tokens[14]);
    EXPECT_EQ(ex.tokens[12], c1);
    EXPECT_EQ(ex.tokens[13], c1);
    EXPECT_EQ(ex.tokens[15], c2);
    EXPECT_EQ(ex.tokens[16], (c1 + c2) % 10);
  }
}

TEST(TasksTest, ExamplesAreWellFormed) {
  for (Task t : {Task::R, Task::V, Task::VR}) {
    for (const auto& ex : generate(t, 200, 6, Split::any)) {
      EXPECT_EQ(ex.task, t);
      EXPECT_EQ(ex.mask.size(), ex.tokens.size());
      EXPECT_GE(ex.supervised(), 1u);
      EXPECT_FALSE(ex.mask[0]);
      for (int tok : ex.tokens) {
        EXPECT_GE(tok, 0);
        EXPECT_LT(tok, 32);
      }
    }
  }
}

TEST(TasksTest, TagsAreDisjointAndDigitsShared) {
  const std::set<int> tags = {gen_r(1, 2, 1)[0].tokens[0], gen_v(1, 1)[0].tokens[0], gen_vr(1, 1)[0].tokens[0]};
  EXPECT_EQ(tags.size(), 3u);
  for (int t : tags) EXPECT_GE(t, 10);
}

TEST(TasksTest, Reproducible) {
  const auto a = gen_vr(50, 7), b = gen_vr(50, 7), c = gen_vr(50, 8);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].tokens, b[i].tokens);
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i].tokens == c[i].tokens;
  EXPECT_LT(same, 10u);
  EXPECT_EQ(gen_r(20, 4, 3)[7].tokens, gen_r(20, 4, 3)[7].tokens);
}

TEST(TasksTest, SplitsAreDisjoint) {
  for (Task t : {Task::R, Task::V, Task::VR}) {
    std::set<std::vector<int>> train;
    for (const auto& ex : generate(t, 2000, 1, Split::train)) {
      EXPECT_EQ(split_of(ex), Split::train);
      train.insert(ex.tokens);
    }
    for (const auto& ex : generate(t, 500, 2, Split::eval)) {
      EXPECT_EQ(split_of(ex), Split::eval);
      EXPECT_FALSE(train.count(ex.tokens));
    }
  }
}

TEST(TasksTest, EvalShareIsAboutOneFifth) {
  std::size_t eval = 0;
  const auto d = gen_vr(5000, 9);
  for (const auto& ex : d) eval += split_of(ex) == Split::eval;
  EXPECT_NEAR(static_cast<double>(eval) / 5000.0, 0.2, 0.03);
}

TEST(TasksJsonlTest, RecordFormat) {
  const Example ex = make_r(std::vector<int>{3, 9});
  EXPECT_EQ(to_jsonl_record(ex),
            R"({"tokens":[20,23,24,3,3,24,9,2],"mask":[false,false,false,false,true,false,false,true],"task":"R"})");
  const Example back = from_jsonl_record(R"({"tokens":[20,23,24,3,3,24,9,2],"mask":[0,0,0,0,1,0,0,1],"task":"R"})");
  EXPECT_EQ(back.tokens, ex.tokens);
  EXPECT_EQ(back.mask, ex.mask);
}

TEST(TasksJsonlTest, FileRoundTrip) {
  Dataset d = gen_vr(20, 1);
  const auto r = gen_r(20, 3, 1);
  d.insert(d.end(), r.begin(), r.end());
  const auto path = std::filesystem::temp_directory_path() / "drift_tasks_test.jsonl";
  save_jsonl(d, path);
  const Dataset back = load_jsonl(path);
  ASSERT_EQ(back.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(back[i].tokens, d[i].tokens);
    EXPECT_EQ(back[i].mask, d[i].mask);
    EXPECT_EQ(back[i].task, d[i].task);
  }
  std::filesystem::remove(path);
}

TEST(TasksJsonlTest, BadRecordsNameTheLine) {
  const auto path = std::filesystem::temp_directory_path() / "drift_tasks_bad.jsonl";
  {
    std::ofstream f(path);
    f << to_jsonl_record(gen_v(1, 1)[0]) << "\n";
    f << R"({"tokens":[1,2],"mask":[0],"task":"V"})" << "\n";
  }
  try {
    load_jsonl(path);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.entry(), "line 2");
  }
  EXPECT_THROW(from_jsonl_record(R"({"tokens":[1],"mask":[0],"task":"Q"})"), ParseError);
  EXPECT_THROW(from_jsonl_record("not json"), ParseError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace drift

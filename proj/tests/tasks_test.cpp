#include <gtest/gtest.h>

#include <set>

#include "memo/policy.hpp"
#include "test_support.hpp"

namespace memo {
namespace {

const HashingEmbedder kEmbedder;

const Prompts& prompts() {
  static const Prompts p = Prompts::load(testing::asset_path("prompts"));
  return p;
}

const TaskLibrary& library() {
  static const TaskLibrary lib = TaskLibrary::load(testing::asset_path("tasks"));
  return lib;
}

EpisodeResult run(Skillbook& book, const TaskSpec& task, Teacher& teacher, bool no_retrieval = false) {
  auto model = ScriptedModel::from_path(testing::asset_path("fixtures"));
  Policy policy(book, *model, kEmbedder, prompts(), Config{});
  EpisodeOptions opt;
  opt.no_retrieval = no_retrieval;
  return policy.run_episode(task, teacher, opt);
}

TEST(Library, Shape) {
  const auto& tasks = library().tasks();
  EXPECT_EQ(tasks.size(), 25u);
  std::set<std::string> names;
  std::map<TaskCategory, int> categories;
  int held_out = 0;
  for (const auto& t : tasks) {
    names.insert(t.name);
    categories[t.category]++;
    held_out += t.held_out;
    EXPECT_FALSE(t.subtasks.empty()) << t.name;
  }
  EXPECT_EQ(names.size(), tasks.size());
  EXPECT_EQ(categories.size(), 4u);
  EXPECT_GE(held_out, 1);
  for (const char* n : {"Make toast", "Season the food", "Empty the cabinet", "Pour the can"}) {
    EXPECT_TRUE(library().contains(n)) << n;
  }
  EXPECT_TRUE(library().contains("make TOAST"));
  EXPECT_THROW(library().find("Fly to the moon"), Error);
}

TEST(Library, EveryTaskIsSolvedWithTheScriptedTeacher) {
  for (const auto& t : library().tasks()) {
    Skillbook book(testing::hashing_header());
    ScriptedTeacher teacher(t.teacher);
    const auto r = run(book, t, teacher);
    EXPECT_TRUE(r.success) << t.name;
    EXPECT_LE(r.attempts, Config{}.max_attempts) << t.name;
  }
}

TEST(Library, HeldOutTasksTransferZeroShot) {
  Skillbook book(testing::hashing_header());
  for (const auto& t : library().tasks()) {
    if (t.held_out) continue;
    ScriptedTeacher teacher(t.teacher);
    run(book, t, teacher);
  }
  for (const auto& t : library().tasks()) {
    if (!t.held_out) continue;
    auto learned = book.clone();
    SilentTeacher silent;
    const auto memo = run(*learned, t, silent);
    EXPECT_TRUE(memo.success) << t.name;
    EXPECT_EQ(memo.feedback_count, 0) << t.name;

    auto baseline = book.clone();
    SilentTeacher silent_base;
    EXPECT_FALSE(run(*baseline, t, silent_base, true).success) << t.name;
  }
}

}  // namespace
}  // namespace memo

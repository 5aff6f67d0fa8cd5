#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>

#include "morphoprobe/json_io.hpp"
#include "support/temp_dir.hpp"

using namespace morphoprobe;

namespace {

int run(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd = std::string("\"") + MORPHOPROBE_CLI + "\" " + args + " > \"" + log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, HelpSucceeds) {
  testkit::TempDir dir;
  EXPECT_EQ(run("--help", dir / "log"), 0);
  EXPECT_NE(read_text_file(dir / "log").find("sample"), std::string::npos);
  EXPECT_EQ(run("sample --help", dir / "log"), 0);
}

TEST(Cli, UsageErrorsExitOne) {
  testkit::TempDir dir;
  EXPECT_EQ(run("", dir / "log"), 1);
  EXPECT_EQ(run("frobnicate", dir / "log"), 1);
  EXPECT_EQ(run("sample --lang xx", dir / "log"), 1);  // --corpus and --out missing
}

TEST(Cli, RuntimeErrorsExitTwoWithPath) {
  testkit::TempDir dir;
  const auto missing = dir / "no-such-treebank";
  EXPECT_EQ(run("ingest --treebank \"" + missing.string() + "\" --lang xx --out \"" + (dir / "o").string() + "\"",
                dir / "log"),
            2);
  EXPECT_NE(read_text_file(dir / "log").find("no-such-treebank"), std::string::npos);
}

TEST(Cli, IngestMiniTreebank) {
  testkit::TempDir dir;
  const auto mini = testkit::data_dir() / "mini";
  ASSERT_EQ(run("ingest --treebank \"" + mini.string() + "\" --lang en --out \"" + (dir / "c").string() + "\"",
                dir / "log"),
            0)
      << read_text_file(dir / "log");
  EXPECT_TRUE(std::filesystem::exists(dir / "c" / "en-ud-train.conllu"));
  const auto stats = read_json_file(dir / "c" / "stats.json");
  EXPECT_NE(stats.dump().find("12"), std::string::npos);
  EXPECT_NE(read_text_file(dir / "log").find("12 sentences"), std::string::npos);
}

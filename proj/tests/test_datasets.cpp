#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "morphnli/datasets.hpp"

namespace fs = std::filesystem;
using namespace morphnli;

namespace {

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("morphnli_ds_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& content) {
    auto p = dir_ / name;
    std::ofstream(p, std::ios::binary) << content;
    return p;
  }

  fs::path dir_;
};

using Datasets = TempDir;

}  // namespace

TEST(NormalizeLabel, CaseInsensitive) {
  EXPECT_EQ(normalize_label("ENTAILMENT"), NliLabel::Entailment);
  EXPECT_EQ(normalize_label("Neutral"), NliLabel::Neutral);
  EXPECT_EQ(normalize_label(" contradiction "), NliLabel::Contradiction);
}

TEST(NormalizeLabel, DashIsNoLabel) {
  EXPECT_EQ(normalize_label("-"), std::nullopt);
  EXPECT_EQ(normalize_label(""), std::nullopt);
}

TEST(NormalizeLabel, UnknownThrows) {
  try {
    normalize_label("maybe");
    FAIL();
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.code(), DatasetErrc::UnknownLabel);
  }
}

TEST_F(Datasets, ThreeLineJsonl) {
  auto p = write("three.jsonl",
                 R"({"id":"a","premise":"A man sleeps.","hypothesis":"A person sleeps.","gold_label":"entailment"})"
                 "\n"
                 R"({"id":"b","premise":"A cat runs.","hypothesis":"A cat sits.","gold_label":"contradiction"})"
                 "\n"
                 R"({"premise":"Kids play.","hypothesis":"Kids play outside.","gold_label":"neutral"})"
                 "\n");
  auto r = load_pairs(p);
  ASSERT_EQ(r.records.size(), 3u);
  EXPECT_TRUE(r.warnings.empty());
  EXPECT_EQ(r.records[0].id, "a");
  EXPECT_EQ(r.records[1].gold, NliLabel::Contradiction);
  EXPECT_EQ(r.records[2].id, "three-3");
  EXPECT_EQ(r.records[2].gold, NliLabel::Neutral);
}

TEST_F(Datasets, SickTsvWithColumnMap) {
  auto p = write("sick.tsv",
                 "pair_ID\tsentence_A\tsentence_B\tentailment_label\trelatedness_score\n"
                 "1\tA group of kids is playing in a yard\tA group of boys is playing in a yard\tNEUTRAL\t4.5\n"
                 "2\tA man is playing a guitar\tA man is not playing a guitar\tCONTRADICTION\t3.9\n"
                 "3\tA woman is slicing an onion\tA woman is cutting an onion\tENTAILMENT\t4.8\n");
  LoadOptions opt;
  opt.columns = ColumnMap::sick();
  opt.domain_tag = "sick";
  auto r = load_pairs(p, opt);
  ASSERT_EQ(r.records.size(), 3u);
  EXPECT_EQ(r.records[0].id, "1");
  EXPECT_EQ(r.records[0].premise, "A group of kids is playing in a yard");
  EXPECT_EQ(r.records[0].gold, NliLabel::Neutral);
  EXPECT_EQ(r.records[1].gold, NliLabel::Contradiction);
  EXPECT_EQ(r.records[2].gold, NliLabel::Entailment);
  EXPECT_EQ(r.records[2].domain_tag, "sick");
}

TEST_F(Datasets, TsvWithoutMappedColumnsIsHeaderMismatch) {
  auto p = write("sick.tsv", "pair_ID\tsentence_A\tsentence_B\n1\ta\tb\n");
  try {
    load_pairs(p);
    FAIL();
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.code(), DatasetErrc::HeaderMismatch);
  }
}

TEST_F(Datasets, MissingFileIsIoError) {
  try {
    load_pairs(dir_ / "nope.jsonl");
    FAIL();
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.code(), DatasetErrc::Io);
  }
}

TEST_F(Datasets, OneMalformedRowOfTen) {
  std::string body;
  for (int i = 0; i < 10; ++i) {
    if (i == 6) {
      body += "{\"id\": \"r6\", \"premise\": \"broken\n";
      continue;
    }
    body += "{\"id\":\"r" + std::to_string(i) + "\",\"premise\":\"p " + std::to_string(i) +
            "\",\"hypothesis\":\"h\",\"gold_label\":\"neutral\"}\n";
  }
  auto r = load_pairs(write("ten.jsonl", body));
  EXPECT_EQ(r.rows, 10u);
  EXPECT_EQ(r.records.size(), 9u);
  EXPECT_EQ(r.warnings.size(), 1u);
}

TEST_F(Datasets, SkippedPlusEmittedEqualsRows) {
  auto p = write("mixed.tsv",
                 "id\tpremise\thypothesis\tgold_label\n"
                 "1\tA man sleeps\tA man rests\tentailment\n"
                 "2\t\tA man rests\tneutral\n"
                 "3\tA dog\tA cat\tmaybe\n"
                 "1\tA man sleeps\tdup\tneutral\n"
                 "4\tonly two\n"
                 "5\tSnow falls\tIt is cold\t-\n");
  auto r = load_pairs(p);
  EXPECT_EQ(r.rows, 6u);
  EXPECT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.skipped(), 4u);
  EXPECT_EQ(r.warnings.size(), r.skipped());
  EXPECT_FALSE(r.records[1].gold.has_value());
}

TEST_F(Datasets, JsonlRoundTripIsLossless) {
  std::string body =
      R"({"domain":"mnli","gold_label":"entailment","hypothesis":"A person sleeps.","id":"a","premise":"A man sleeps.","split":"train"})"
      "\n"
      R"({"domain":"sick","gold_label":null,"hypothesis":"Kids play outside.","id":"b","premise":"Kids play.","split":"test"})"
      "\n";
  auto src = write("in.jsonl", body);
  auto r = load_pairs(src);
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.records[0].split, Split::Train);
  auto dst = dir_ / "out.jsonl";
  write_pairs_jsonl(r.records, dst);
  std::ifstream in(dst);
  std::string out((std::istreambuf_iterator<char>(in)), {});
  EXPECT_EQ(out, body);
  auto again = load_pairs(dst);
  ASSERT_EQ(again.records.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(json(again.records[i]), json(r.records[i]));
  }
}

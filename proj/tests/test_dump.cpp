#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "calib/dump.hpp"
#include "calib/error.hpp"
#include "helpers.hpp"

using namespace calib;
namespace fs = std::filesystem;

namespace {

fs::path write_file(const std::string& name, const std::string& text)
{
    const auto dir = fs::temp_directory_path() / "calib_dump_tests";
    fs::create_directories(dir);
    const auto p = dir / name;
    std::ofstream(p) << text;
    return p;
}

std::string error_of(const fs::path& p, DumpFormat f, ScoreMode m)
{
    try {
        load_dump(p, f, m);
    } catch (const ValidationError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_SUITE("dump")
{
    TEST_CASE("CSV probabilities")
    {
        const auto p = write_file("probs.csv", "p0,p1,label\n0.9,0.1,0\n0.4,0.6,1\n0.5,0.5,0\n");
        const auto d = load_dump(p, DumpFormat::Csv, ScoreMode::Probabilities);
        CHECK(d.size() == 3);
        CHECK(d.num_classes() == 2);
        CHECK(d.row(1)[1] == 0.6);
        CHECK(d.label(1) == 1);
    }

    TEST_CASE("CSV logits go through softmax")
    {
        const auto p = write_file("logits.csv", "z0,z1,label\n2.0,0.0,0\n");
        const auto d = load_dump(p, DumpFormat::Csv, ScoreMode::Logits);
        CHECK(d.row(0)[0] == doctest::Approx(0.880797).epsilon(1e-6));
        CHECK(d.row(0)[1] == doctest::Approx(0.119203).epsilon(1e-6));
        CHECK(d.has_logits());
    }

    TEST_CASE("JSON lines")
    {
        const auto p = write_file("rows.jsonl",
                                  "{\"probs\": [0.2, 0.3, 0.5], \"label\": 2}\n\n"
                                  "{\"probs\": [0.6, 0.3, 0.1], \"label\": 0}\n");
        const auto d = load_dump(p, DumpFormat::JsonLines, ScoreMode::Probabilities);
        CHECK(d.size() == 2);
        CHECK(d.num_classes() == 3);
        const auto q = write_file("logits.jsonl", "{\"logits\": [2.0, 0.0], \"label\": 1}\n");
        CHECK(load_dump(q, DumpFormat::JsonLines, ScoreMode::Logits).row(0)[0] ==
              doctest::Approx(0.880797).epsilon(1e-6));
    }

    TEST_CASE("errors name the offending row")
    {
        auto p = write_file("bad_label.csv", "p0,p1,label\n0.9,0.1,0\n0.4,0.6,2\n");
        CHECK(error_of(p, DumpFormat::Csv, ScoreMode::Probabilities).find("line 3") != std::string::npos);
        p = write_file("bad_width.csv", "p0,p1,label\n0.9,0.1,0\n0.4,0.6\n");
        CHECK(error_of(p, DumpFormat::Csv, ScoreMode::Probabilities).find("line 3") != std::string::npos);
        p = write_file("bad_number.csv", "p0,p1,label\n0.9,abc,0\n");
        CHECK(error_of(p, DumpFormat::Csv, ScoreMode::Probabilities).find("line 2") != std::string::npos);
        p = write_file("bad_sum.csv", "p0,p1,label\n0.9,0.3,0\n");
        CHECK(!error_of(p, DumpFormat::Csv, ScoreMode::Probabilities).empty());
        p = write_file("bad_header.csv", "a,b,label\n0.9,0.1,0\n");
        CHECK(!error_of(p, DumpFormat::Csv, ScoreMode::Probabilities).empty());
        p = write_file("mode_mismatch.csv", "p0,p1,label\n0.9,0.1,0\n");
        CHECK(!error_of(p, DumpFormat::Csv, ScoreMode::Logits).empty());
        p = write_file("bad_k.jsonl", "{\"probs\": [0.5, 0.5], \"label\": 0}\n{\"probs\": [0.2, 0.3, 0.5], \"label\": 0}\n");
        CHECK(error_of(p, DumpFormat::JsonLines, ScoreMode::Probabilities).find("line 2") != std::string::npos);
        p = write_file("bad_json.jsonl", "{\"probs\": [0.5, 0.5], \"label\": 0}\n{oops\n");
        CHECK(error_of(p, DumpFormat::JsonLines, ScoreMode::Probabilities).find("line 2") != std::string::npos);
        CHECK(!error_of("/nonexistent/x.csv", DumpFormat::Csv, ScoreMode::Probabilities).empty());
    }

    TEST_CASE("write then load round trips bit-exactly")
    {
        Rng rng(3, 0);
        const auto d = testing::random_set(rng, 40, 4);
        const auto dir = fs::temp_directory_path() / "calib_dump_tests";
        fs::create_directories(dir);
        for (auto fmt : {DumpFormat::Csv, DumpFormat::JsonLines}) {
            const auto p = dir / (fmt == DumpFormat::Csv ? "rt.csv" : "rt.jsonl");
            write_dump(d, p, fmt, ScoreMode::Probabilities);
            const auto back = load_dump(p, fmt, ScoreMode::Probabilities);
            REQUIRE(back.size() == d.size());
            for (std::size_t i = 0; i < d.size(); ++i) {
                CHECK(back.label(i) == d.label(i));
                for (std::size_t k = 0; k < 4; ++k)
                    CHECK(std::abs(back.row(i)[k] - d.row(i)[k]) < 1e-15);
            }
            const auto lp = dir / (fmt == DumpFormat::Csv ? "rt_logits.csv" : "rt_logits.jsonl");
            write_dump(d, lp, fmt, ScoreMode::Logits);
            const auto lb = load_dump(lp, fmt, ScoreMode::Logits);
            for (std::size_t i = 0; i < d.size(); ++i)
                for (std::size_t k = 0; k < 4; ++k)
                    CHECK(std::abs(lb.row(i)[k] - d.row(i)[k]) < 1e-12);
        }
    }

    TEST_CASE("format names")
    {
        CHECK(guess_dump_format("a.jsonl") == DumpFormat::JsonLines);
        CHECK(guess_dump_format("a.ndjson") == DumpFormat::JsonLines);
        CHECK(guess_dump_format("a.csv") == DumpFormat::Csv);
        CHECK(score_mode_from_string("logits") == ScoreMode::Logits);
        CHECK_THROWS_AS(score_mode_from_string("x"), ValidationError);
        CHECK_THROWS_AS(dump_format_from_string("x"), ValidationError);
    }
}

#include <doctest.h>

#include <fstream>

#include "sddr/dataset.hpp"
#include "sddr/error.hpp"
#include "support.hpp"

using namespace sddr;

namespace {

std::string write_file(const std::string& name, const std::string& text) {
    auto path = test::scratch_dir("dataset-" + name) / "data.csv";
    std::ofstream(path) << text;
    return path.string();
}

}  // namespace

TEST_SUITE("dataset") {

TEST_CASE("three rows in header order") {
    Dataset d = load_dataset(write_file("basic", "y,x\n1,2\n3,4\n5,6\n"));
    CHECK(d.rows() == 3);
    CHECK(d.column_names() == std::vector<std::string>{"y", "x"});
    CHECK(d.numeric("x")[2] == 6.0);
}

TEST_CASE("missing and bad cells report their position") {
    try {
        load_dataset(write_file("na", "y,x\n1,2\n3,NA\n"));
        FAIL("expected a data error");
    } catch (const DataError& e) {
        CHECK(e.row() == 3);
        CHECK(e.col() == 2);
    }
    CHECK_THROWS_AS(load_dataset(write_file("empty", "")), UserError);
    CHECK_THROWS_AS(load_dataset(write_file("header-only", "y,x\n")), UserError);
    CHECK_THROWS_AS(load_dataset(write_file("ragged", "y,x\n1,2\n3\n")), DataError);
    CHECK_THROWS_AS(load_dataset(write_file("text", "y,x\n1,abc\n")), DataError);
    CHECK_THROWS_AS(load_dataset(write_file("inf", "y,x\n1,inf\n")), DataError);
    CHECK_THROWS_AS(load_dataset("/nonexistent/file.csv"), UserError);
}

TEST_CASE("label columns keep their text") {
    Dataset d = load_dataset(write_file("labels", "y,g\n1,a\n2,b\n3,a\n"), {"g"});
    CHECK(d.labels("g") == std::vector<std::string>{"a", "b", "a"});
    CHECK_THROWS_AS(d.numeric("g"), UserError);
    CHECK_THROWS_AS(d.numeric("missing"), UserError);
}

TEST_CASE("csv round trip is exact") {
    std::mt19937_64 rng(3);
    Dataset d;
    d.add_numeric("a", test::uniform(50, rng, -1e3, 1e3));
    d.add_numeric("b", test::uniform(50, rng, -1e-8, 1e-8));
    const auto dir = test::scratch_dir("dataset-roundtrip");
    write_csv(d, (dir / "out.csv").string());
    Dataset back = load_dataset((dir / "out.csv").string());
    CHECK(back.numeric("a") == d.numeric("a"));
    CHECK(back.numeric("b") == d.numeric("b"));
}

TEST_CASE("format_double is shortest round trip") {
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(1.0) == "1");
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

}

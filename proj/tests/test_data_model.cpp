#include <doctest.h>

#include <cmath>
#include <sstream>

#include "causalfuse/csv.hpp"
#include "causalfuse/types.hpp"
#include "support/test_util.hpp"

using namespace causalfuse;

TEST_CASE("load_csv counts groups") {
  std::istringstream in(
      "y,x,z,g\n"
      "1,2,3,E\n"
      "1.5,2.5,3.5,E\n"
      "0.1,0.2,0.3,O\n"
      "0.4,0.5,0.6,O\n"
      "0.7,0.8,0.9,O\n");
  const FusedDataset ds = load_csv(in);
  CHECK(ds.n_e() == 2);
  CHECK(ds.n_o() == 3);
  CHECK(ds.size() == 5);
  CHECK(ds.records()[0].y == 1.0);
  CHECK(ds.records()[4].z == 0.9);
}

TEST_CASE("load_csv accepts CRLF") {
  std::istringstream in("y,x,z,g\r\n1,2,3,E\r\n4,5,6,O\r\n");
  const FusedDataset ds = load_csv(in);
  CHECK(ds.n_e() == 1);
  CHECK(ds.n_o() == 1);
}

TEST_CASE("load_csv rejects an unknown group tag, naming the line") {
  // bad tag sits on file line 4
  std::istringstream in(
      "y,x,z,g\n"
      "1,2,3,E\n"
      "1,2,3,O\n"
      "1,2,3,X\n");
  try {
    load_csv(in);
    FAIL("expected UnknownGroupTag");
  } catch (const ValidationError& e) {
    CHECK(e.name() == "UnknownGroupTag");
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
}

TEST_CASE("load_csv error cases") {
  SUBCASE("wrong header") {
    std::istringstream in("y,x,g\n");
    CHECK_THROWS_WITH_AS(load_csv(in), doctest::Contains("header"), ValidationError);
  }
  SUBCASE("missing field") {
    std::istringstream in("y,x,z,g\n1,2,3\n");
    try {
      load_csv(in);
      FAIL("expected MissingColumn");
    } catch (const ValidationError& e) {
      CHECK(e.name() == "MissingColumn");
    }
  }
  SUBCASE("non-numeric cell names row and column") {
    std::istringstream in("y,x,z,g\n1,2,3,E\n1,abc,3,O\n");
    try {
      load_csv(in);
      FAIL("expected NonNumericCell");
    } catch (const ValidationError& e) {
      CHECK(e.name() == "NonNumericCell");
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
      CHECK(std::string(e.what()).find("column x") != std::string::npos);
    }
  }
  SUBCASE("empty group") {
    std::istringstream in("y,x,z,g\n1,2,3,E\n4,5,6,E\n");
    try {
      load_csv(in);
      FAIL("expected EmptyGroup");
    } catch (const ValidationError& e) {
      CHECK(e.name() == "EmptyGroup");
    }
  }
  SUBCASE("infinity rejected") {
    std::istringstream in("y,x,z,g\ninf,2,3,E\n1,2,3,O\n");
    CHECK_THROWS_AS(load_csv(in), ValidationError);
  }
}

TEST_CASE("csv round trip reproduces parsed values bit for bit") {
  const FusedDataset ds = test::random_dataset(42, 300, 700);
  REQUIRE(ds.size() == 1000);
  std::ostringstream first;
  write_csv(ds, first);
  std::istringstream back(first.str());
  const FusedDataset ds2 = load_csv(back);
  REQUIRE(ds2.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(ds.records()[i].y == ds2.records()[i].y);
    CHECK(ds.records()[i].x == ds2.records()[i].x);
    CHECK(ds.records()[i].z == ds2.records()[i].z);
    CHECK(ds.records()[i].g == ds2.records()[i].g);
  }
  // and the re-written bytes are identical
  std::ostringstream second;
  write_csv(ds2, second);
  CHECK(first.str() == second.str());
}

TEST_CASE("loading is deterministic") {
  std::ostringstream buf;
  write_csv(test::random_dataset(7, 20, 30), buf);
  std::istringstream a(buf.str()), b(buf.str());
  const FusedDataset da = load_csv(a), db = load_csv(b);
  REQUIRE(da.size() == db.size());
  for (std::size_t i = 0; i < da.size(); ++i) {
    CHECK(da.records()[i].y == db.records()[i].y);
  }
}

TEST_CASE("split partitions by group") {
  SUBCASE("only E rows gives an empty O block") {
    std::vector<UnitRecord> recs{{1, 2, 3, Group::E}, {4, 5, 6, Group::E}, {7, 8, 9, Group::E}};
    const auto ds = FusedDataset::from_records(recs);
    const auto [e, o] = split(ds);
    CHECK(e.n() == 3);
    CHECK(o.n() == 0);
  }
  SUBCASE("mixed 5-row dataset") {
    std::istringstream in("y,x,z,g\n1,1,1,E\n2,2,2,O\n3,3,3,E\n4,4,4,O\n5,5,5,O\n");
    const auto ds = load_csv(in);
    const auto [e, o] = split(ds);
    CHECK(static_cast<std::size_t>(e.n()) == ds.n_e());
    CHECK(static_cast<std::size_t>(o.n()) == ds.n_o());
    CHECK(e.n() + o.n() == static_cast<Eigen::Index>(ds.size()));
  }
  SUBCASE("groupwise means match a direct fold at 1e-12") {
    const FusedDataset ds = test::random_dataset(11, 4000, 6000);
    const auto [e, o] = split(ds);
    double se = 0.0, so = 0.0;
    for (const auto& r : ds.records()) {
      (r.g == Group::E ? se : so) += r.z;
    }
    CHECK(e.z.mean() == doctest::Approx(se / static_cast<double>(ds.n_e())).epsilon(1e-12));
    CHECK(o.z.mean() == doctest::Approx(so / static_cast<double>(ds.n_o())).epsilon(1e-12));
  }
}

TEST_CASE("from_records rejects non-finite values") {
  std::vector<UnitRecord> recs{{std::nan(""), 0, 0, Group::E}};
  CHECK_THROWS_AS(FusedDataset::from_records(recs), ValidationError);
}

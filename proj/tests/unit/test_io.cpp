#include "helpers.hpp"

#include <doctest.h>

#include <sstream>

using namespace dsa;

namespace {

TrajectoryRecord sample_record(bool diagnostics) {
  TrajectoryRecord rec;
  rec.agents = 3;
  rec.diagnostics = diagnostics;
  Rng rng(4);
  for (long t = 0; t <= 5; ++t) {
    TrajectoryRow r;
    r.t = t;
    r.gamma = 1.0 / (t + 2.0);
    r.h_bar_sq = rng.uniform();
    r.grad_sq = rng.uniform() * 1e-9;
    r.cons_err = rng.uniform(0, 3);
    r.potential = -rng.uniform();
    for (int i = 0; i < 3; ++i) r.dev.push_back(rng.uniform());
    r.max_dev = *std::max_element(r.dev.begin(), r.dev.end());
    if (diagnostics) {
      r.e0 = rng.uniform();
      r.e1 = 0.1 / 3.0;
      r.res_c = 1e-17;
      r.res_o = 0;
      r.res_d = 2.5e-300;
    }
    rec.rows.push_back(r);
  }
  rec.horizon = 5;
  return rec;
}

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("trajectory CSV round trip is exact") {
    for (bool diag : {false, true}) {
      const TrajectoryRecord rec = sample_record(diag);
      std::stringstream buf;
      write_trajectory_csv(buf, rec);
      const TrajectoryRecord back = read_trajectory_csv(buf);
      CHECK(back.agents == 3);
      CHECK(back.horizon == 5);
      CHECK(back.diagnostics == diag);
      REQUIRE(back.rows.size() == rec.rows.size());
      for (std::size_t k = 0; k < rec.rows.size(); ++k) {
        const auto &a = rec.rows[k], &b = back.rows[k];
        CHECK(a.t == b.t);
        CHECK(a.gamma == b.gamma);
        CHECK(a.h_bar_sq == b.h_bar_sq);
        CHECK(a.grad_sq == b.grad_sq);
        CHECK(a.cons_err == b.cons_err);
        CHECK(a.potential == b.potential);
        CHECK(a.max_dev == b.max_dev);
        CHECK(a.dev == b.dev);
        if (diag) {
          CHECK(a.e0 == b.e0);
          CHECK(a.e1 == b.e1);
          CHECK(a.res_c == b.res_c);
          CHECK(a.res_d == b.res_d);
        }
      }
      // writing the parsed record again reproduces the bytes
      std::stringstream again;
      write_trajectory_csv(again, back);
      CHECK(again.str() == buf.str());
    }
  }

  TEST_CASE("header layout") {
    std::stringstream buf;
    write_trajectory_csv(buf, sample_record(true));
    std::string header;
    std::getline(buf, header);
    CHECK(header == "t,gamma,h_bar_sq,grad_sq,cons_err,V,e0,e1,res_c,res_o,res_d,max_dev,dev_1,dev_2,dev_3");
  }

  TEST_CASE("malformed trajectory files") {
    std::istringstream no_cols("t,gamma,V\n0,1,2\n");
    CHECK_THROWS_AS(read_trajectory_csv(no_cols), ReportError);
    try {
      std::istringstream again("t,gamma,V\n");
      read_trajectory_csv(again);
    } catch (const ReportError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("cons_err") != std::string::npos);
      CHECK(msg.find("max_dev") != std::string::npos);
    }
    std::istringstream empty("");
    CHECK_THROWS_AS(read_trajectory_csv(empty), ReportError);
    std::istringstream ragged("t,gamma,h_bar_sq,grad_sq,cons_err,V,max_dev\n0,1,2\n");
    CHECK_THROWS_AS(read_trajectory_csv(ragged), ReportError);
    std::istringstream bad("t,gamma,h_bar_sq,grad_sq,cons_err,V,max_dev\n0,1,2,x,4,5,6\n");
    CHECK_THROWS_AS(read_trajectory_csv(bad), ValidationError);
    CHECK_THROWS_AS(load_trajectory_csv("/nonexistent/run_0.csv"), ReportError);
  }

  TEST_CASE("constants JSON round trip keeps provenance") {
    ConstantsBundle c = testing::full_bundle(0.5, 2.0, 1.5, 0.7, 3.0, 1.0, 0.0, 0.25, 0.4, 4);
    c.sigma_h->provenance = Provenance::Sampled;
    c.notes = {"grid estimate"};
    const Json j = to_json(c);
    CHECK(j.at("sigma_h").at("provenance") == "sampled");
    const ConstantsBundle back = constants_from_json(Json::parse(j.dump()));
    CHECK(back.missing().empty());
    CHECK(back.c0->value == 0.5);
    CHECK(back.sigma_h->provenance == Provenance::Sampled);
    CHECK(back.rho_bar->provenance == Provenance::Network);
    CHECK(back.a_ratio->value == 1.5);
    CHECK(back.notes == c.notes);
    CHECK(to_json(back).dump() == j.dump());
  }

  TEST_CASE("constants JSON accepts bare numbers and rejects bad entries") {
    const ConstantsBundle c = constants_from_json(Json::parse(R"({"c0": 0.1, "d0": {"value": 3}})"));
    CHECK(c.c0->value == 0.1);
    CHECK(c.d0->value == 3);
    CHECK_FALSE(c.sigma_o.has_value());
    CHECK_FALSE(c.missing().empty());
    CHECK_THROWS_AS(constants_from_json(Json::parse(R"({"c0": "big"})")), ValidationError);
    CHECK_THROWS_AS(constants_from_json(Json::parse(R"({"c0": {"value": 1, "provenance": "guess"}})")),
                    ValidationError);
    CHECK_THROWS_AS(constants_from_json(Json::parse("[1, 2]")), ValidationError);
  }

  TEST_CASE("fnv1a") {
    CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a("foobar") == 0x85944171f73967e8ULL);
    CHECK(fnv1a("abc") != fnv1a("acb"));
  }
}

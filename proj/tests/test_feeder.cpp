#include <doctest.h>

#include <cmath>
#include <random>

#include "dopf/feeder.hpp"
#include "test_util.hpp"

using namespace dopf;

namespace {

const char* kMinimalDoc = R"({
  "base": 1.0,
  "buses": [
    {"id": "sub", "phases": [1], "w_lo": [1.0], "w_hi": [1.0]}
  ],
  "generators": [
    {"id": "g1", "bus": "sub", "phases": [1],
     "p_lo": [0.0], "p_hi": [1.0], "q_lo": [-1.0], "q_hi": [1.0]}
  ],
  "lines": [],
  "loads": []
})";

}  // namespace

TEST_CASE("parse_feeder accepts the smallest valid feeder") {
  const Feeder f = parse_feeder(kMinimalDoc);
  CHECK(f.buses.size() == 1);
  CHECK(f.generators.size() == 1);
  CHECK(f.lines.empty());
  CHECK(f.loads.empty());
  CHECK(f.buses[0].g_sh == std::vector<double>{0.0});  // omitted shunts default to zero
  CHECK(validate_feeder(f).empty());
}

TEST_CASE("parse_feeder rejects a load on a missing bus, naming it") {
  const char* doc = R"({
    "base": 1.0,
    "buses": [{"id": "sub", "phases": [1], "w_lo": [1.0], "w_hi": [1.0]}],
    "generators": [],
    "lines": [],
    "loads": [{"id": "d1", "bus": "b9", "connection": "wye", "phases": [1],
               "a": [0.1], "b": [0.0], "alpha": [0.0], "beta": [0.0]}]
  })";
  CHECK_THROWS_WITH_AS(parse_feeder(doc), doctest::Contains("b9"), ParseError);
}

TEST_CASE("parse_feeder rejects unknown keys with the field path") {
  const char* doc = R"({
    "base": 1.0,
    "buses": [{"id": "sub", "phases": [1], "w_lo": [1.0], "w_hi": [1.0], "voltage": [1.0]}],
    "generators": [], "lines": [], "loads": []
  })";
  CHECK_THROWS_WITH_AS(parse_feeder(doc), doctest::Contains("voltage"), ParseError);
}

TEST_CASE("parse_feeder reports the byte position of syntax errors") {
  CHECK_THROWS_WITH_AS(parse_feeder("{\"base\": 1.0,,}"), doctest::Contains("byte"), ParseError);
}

TEST_CASE("parse_feeder rejects malformed phase sets") {
  const char* doc = R"({
    "base": 1.0,
    "buses": [{"id": "sub", "phases": [1, 1], "w_lo": [1.0, 1.0], "w_hi": [1.0, 1.0]}],
    "generators": [], "lines": [], "loads": []
  })";
  CHECK_THROWS_AS(parse_feeder(doc), ParseError);
  const char* doc4 = R"({
    "base": 1.0,
    "buses": [{"id": "sub", "phases": [4], "w_lo": [1.0], "w_hi": [1.0]}],
    "generators": [], "lines": [], "loads": []
  })";
  CHECK_THROWS_AS(parse_feeder(doc4), ParseError);
}

TEST_CASE("bundled two-bus fixture parses with one line and one load") {
  const Feeder f = parse_feeder_file(test::fixture_path("two_bus"));
  CHECK(f.buses.size() == 2);
  CHECK(f.lines.size() == 1);
  CHECK(f.loads.size() == 1);
  CHECK(validate_feeder(f).empty());
}

TEST_CASE("validate_feeder flags a generator on phases its bus lacks") {
  Feeder f = parse_feeder(kMinimalDoc);
  f.buses[0].phases = PhaseSet({1, 3});
  f.buses[0].w_lo = {1.0, 1.0};
  f.buses[0].w_hi = {1.0, 1.0};
  f.buses[0].g_sh = {0.0, 0.0};
  f.buses[0].b_sh = {0.0, 0.0};
  f.generators[0].phases = PhaseSet({2});
  auto diags = validate_feeder(f);
  REQUIRE(!diags.empty());
  CHECK(has_errors(diags));
  CHECK(diags[0].component == "g1");
}

TEST_CASE("validate_feeder allows pinned voltage bounds") {
  const Feeder f = parse_feeder(kMinimalDoc);  // w_lo == w_hi == 1 at the source
  CHECK(validate_feeder(f).empty());
}

TEST_CASE("validate_feeder flags a disconnected bus-line graph") {
  const char* doc = R"({
    "base": 1.0,
    "buses": [
      {"id": "a", "phases": [1], "w_lo": [0.81], "w_hi": [1.21]},
      {"id": "b", "phases": [1], "w_lo": [0.81], "w_hi": [1.21]}
    ],
    "generators": [{"id": "g1", "bus": "a", "phases": [1],
                    "p_lo": [0.0], "p_hi": [1.0], "q_lo": [-1.0], "q_hi": [1.0]}],
    "lines": [],
    "loads": []
  })";
  auto diags = validate_feeder(parse_feeder(doc));
  CHECK(has_errors(diags));
  bool found = false;
  for (const auto& d : diags) found |= d.message.find("disconnected") != std::string::npos;
  CHECK(found);
}

TEST_CASE("validate_feeder rejects partial-phase delta loads") {
  Feeder f = test::load_fixture("two_bus_delta");
  f.loads[0].phases = PhaseSet({1, 2});
  f.loads[0].a.resize(2);
  f.loads[0].b.resize(2);
  f.loads[0].alpha.resize(2);
  f.loads[0].beta.resize(2);
  CHECK(has_errors(validate_feeder(f)));
}

TEST_CASE("validate_feeder enforces ordered bounds and positive taps") {
  Feeder f = test::load_fixture("two_bus");
  f.buses[1].w_lo[0] = 2.0;  // above w_hi
  CHECK(has_errors(validate_feeder(f)));

  Feeder g = test::load_fixture("two_bus");
  g.lines[0].tau[0] = 0.0;
  CHECK(has_errors(validate_feeder(g)));

  Feeder h = test::load_fixture("two_bus");
  h.loads[0].alpha[0] = -1.0;
  CHECK(has_errors(validate_feeder(h)));
}

TEST_CASE("derive_load_coefficients maps the three canonical kinds") {
  const auto cp = derive_load_coefficients(0.1, 0.05, LoadKind::constant_power);
  CHECK(cp.a == 0.1);
  CHECK(cp.b == 0.05);
  CHECK(cp.alpha == 0.0);
  CHECK(cp.beta == 0.0);

  const auto ci = derive_load_coefficients(0.1, 0.05, LoadKind::constant_current);
  CHECK(ci.alpha == 1.0);

  const auto cz = derive_load_coefficients(0.1, 0.05, LoadKind::constant_impedance);
  CHECK(cz.alpha == 2.0);
  CHECK(cz.beta == 2.0);
}

namespace {
// Linearized demand at squared voltage w_hat.
double demand_at(const LoadCoefficients& lc, double w_hat) {
  return lc.a * lc.alpha / 2.0 * (w_hat - 1.0) + lc.a;
}
}  // namespace

TEST_CASE("load linearization is exact where it should be") {
  const auto cp = derive_load_coefficients(0.1, 0.05, LoadKind::constant_power);
  CHECK(demand_at(cp, 0.5) == doctest::Approx(0.1).epsilon(1e-15));  // no voltage term

  // alpha = 2 makes the linearization exact: p = a * w_hat.
  const auto cz = derive_load_coefficients(0.1, 0.05, LoadKind::constant_impedance);
  CHECK(demand_at(cz, 1.21) == doctest::Approx(0.1 * 1.21).epsilon(1e-15));

  // alpha = 1 agrees to first order: at w_hat = 1.21 the linear model gives
  // 0.1105 against the true 0.1*sqrt(1.21) = 0.11.
  const auto ci = derive_load_coefficients(0.1, 0.05, LoadKind::constant_current);
  CHECK(demand_at(ci, 1.21) == doctest::Approx(0.1105).epsilon(1e-12));
  CHECK(0.1 * std::sqrt(1.21) == doctest::Approx(0.11).epsilon(1e-12));
  CHECK(std::abs(demand_at(ci, 1.21) - 0.11) < 6e-4);

  // At the expansion point every kind reproduces the reference exactly.
  for (const auto kind :
       {LoadKind::constant_power, LoadKind::constant_current, LoadKind::constant_impedance}) {
    const auto lc = derive_load_coefficients(0.37, 0.11, kind);
    CHECK(demand_at(lc, 1.0) == 0.37);
  }
}

TEST_CASE("serialize/parse round trip preserves every fixture field-by-field") {
  for (const auto& name : test::fixture_names()) {
    CAPTURE(name);
    const Feeder f = test::load_fixture(name);
    const Feeder g = parse_feeder(serialize_feeder(f));
    CHECK(f == g);
  }
}

TEST_CASE("round trip keeps unbounded flow limits") {
  Feeder f = test::load_fixture("two_bus");
  f.lines[0].p_hi[0] = kInf;
  f.lines[0].p_lo[0] = -kInf;
  const Feeder g = parse_feeder(serialize_feeder(f));
  CHECK(f == g);
  CHECK(std::isinf(g.lines[0].p_hi[0]));
}

TEST_CASE("round trip holds on randomly generated radial feeders") {
  for (unsigned seed = 1; seed <= 25; ++seed) {
    CAPTURE(seed);
    const Feeder f = test::random_feeder(seed);
    REQUIRE(!has_errors(validate_feeder(f)));
    CHECK(parse_feeder(serialize_feeder(f)) == f);
  }
}

TEST_CASE("diagnostic-free feeders satisfy the type invariants directly") {
  for (const auto& name : test::fixture_names()) {
    CAPTURE(name);
    const Feeder f = test::load_fixture(name);
    for (const Bus& bus : f.buses)
      for (std::size_t k = 0; k < bus.w_lo.size(); ++k) {
        CHECK(bus.w_lo[k] >= 0);
        CHECK(bus.w_lo[k] <= bus.w_hi[k]);
      }
    for (const Generator& gen : f.generators) {
      CHECK(f.find_bus(gen.bus) != nullptr);
      for (std::size_t k = 0; k < gen.p_lo.size(); ++k) {
        CHECK(gen.p_lo[k] <= gen.p_hi[k]);
        CHECK(gen.q_lo[k] <= gen.q_hi[k]);
      }
    }
    for (const LineSegment& line : f.lines) {
      const int np = line.phases.size();
      for (int a = 0; a < np; ++a) {
        CHECK(line.tau[a] > 0);
        for (int b = 0; b < np; ++b) {
          CHECK(line.r[a][b] == line.r[b][a]);
          CHECK(line.x[a][b] == line.x[b][a]);
        }
      }
    }
    for (const Load& load : f.loads) {
      for (std::size_t k = 0; k < load.alpha.size(); ++k) {
        CHECK(load.alpha[k] >= 0);
        CHECK(load.beta[k] >= 0);
      }
      if (load.connection == Connection::delta) CHECK(load.phases.size() == 3);
    }
  }
}

TEST_CASE("PhaseSet basics") {
  const PhaseSet ps({3, 1});
  CHECK(ps.values() == std::vector<int>{1, 3});  // stored ascending
  CHECK(ps.contains(3));
  CHECK(!ps.contains(2));
  CHECK(ps.index_of(3) == 1);
  CHECK(ps.index_of(2) == -1);
  CHECK(ps.subset_of(PhaseSet({1, 2, 3})));
  CHECK(!PhaseSet({1, 2, 3}).subset_of(ps));
  CHECK_THROWS_AS(PhaseSet(std::vector<int>{}), std::invalid_argument);
}

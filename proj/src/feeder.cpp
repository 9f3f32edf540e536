#include "dopf/feeder.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace dopf {

using nlohmann::json;

PhaseSet::PhaseSet(std::vector<int> phases) : phases_(std::move(phases)) {
  if (phases_.empty()) throw std::invalid_argument("phase set must not be empty");
  std::sort(phases_.begin(), phases_.end());
  for (std::size_t i = 0; i < phases_.size(); ++i) {
    if (phases_[i] < 1 || phases_[i] > 3)
      throw std::invalid_argument("phase values must lie in {1,2,3}");
    if (i > 0 && phases_[i] == phases_[i - 1])
      throw std::invalid_argument("duplicate phase value");
  }
}

bool PhaseSet::contains(int phase) const {
  return std::binary_search(phases_.begin(), phases_.end(), phase);
}

int PhaseSet::index_of(int phase) const {
  auto it = std::lower_bound(phases_.begin(), phases_.end(), phase);
  if (it == phases_.end() || *it != phase) return -1;
  return static_cast<int>(it - phases_.begin());
}

bool PhaseSet::subset_of(const PhaseSet& other) const {
  return std::includes(other.phases_.begin(), other.phases_.end(),
                       phases_.begin(), phases_.end());
}

namespace {

template <typename T>
const T* find_by_id(const std::vector<T>& items, const std::string& id) {
  auto it = std::lower_bound(items.begin(), items.end(), id,
                             [](const T& item, const std::string& key) { return item.id < key; });
  if (it == items.end() || it->id != id) return nullptr;
  return &*it;
}

[[noreturn]] void schema_error(const std::string& path, const std::string& message) {
  throw ParseError(path + ": " + message);
}

void expect_keys(const json& obj, const std::string& path,
                 std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* key : allowed)
      if (it.key() == key) { known = true; break; }
    if (!known) schema_error(path, "unknown key '" + it.key() + "'");
  }
}

const json& require_key(const json& obj, const char* key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) schema_error(path, std::string("missing key '") + key + "'");
  return *it;
}

std::string require_string(const json& obj, const char* key, const std::string& path) {
  const json& v = require_key(obj, key, path);
  if (!v.is_string()) schema_error(path + "." + key, "expected a string");
  return v.get<std::string>();
}

double scalar_value(const json& v, const std::string& path) {
  if (v.is_number()) return v.get<double>();
  schema_error(path, "expected a number");
}

// null entries mean "unbounded"; inf_sign selects which infinity.
double bound_value(const json& v, const std::string& path, double inf_sign) {
  if (v.is_null()) return inf_sign * kInf;
  return scalar_value(v, path);
}

PhaseSet parse_phases(const json& obj, const std::string& path) {
  const json& v = require_key(obj, "phases", path);
  if (!v.is_array() || v.empty()) schema_error(path + ".phases", "expected a nonempty array");
  std::vector<int> phases;
  for (const auto& e : v) {
    if (!e.is_number_integer()) schema_error(path + ".phases", "expected integers");
    phases.push_back(e.get<int>());
  }
  try {
    return PhaseSet(std::move(phases));
  } catch (const std::invalid_argument& e) {
    schema_error(path + ".phases", e.what());
  }
}

// Fixed-length per-phase array; entries may be null (-> +-inf) when
// inf_sign != 0. Missing key falls back to `fallback` when provided.
std::vector<double> per_phase_array(const json& obj, const char* key, const std::string& path,
                                    int count, const double* fallback, double inf_sign = 0.0) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    if (fallback) return std::vector<double>(count, *fallback);
    schema_error(path, std::string("missing key '") + key + "'");
  }
  const std::string key_path = path + "." + key;
  if (!it->is_array()) schema_error(key_path, "expected an array");
  if (static_cast<int>(it->size()) != count)
    schema_error(key_path, "expected " + std::to_string(count) + " entries (one per phase)");
  std::vector<double> values;
  values.reserve(count);
  for (const auto& e : *it)
    values.push_back(inf_sign != 0.0 ? bound_value(e, key_path, inf_sign)
                                     : scalar_value(e, key_path));
  return values;
}

std::vector<std::vector<double>> matrix_value(const json& obj, const char* key,
                                              const std::string& path, int count) {
  const json& v = require_key(obj, key, path);
  const std::string key_path = path + "." + key;
  if (!v.is_array() || static_cast<int>(v.size()) != count)
    schema_error(key_path, "expected " + std::to_string(count) + " rows");
  std::vector<std::vector<double>> rows;
  for (int i = 0; i < count; ++i) {
    const json& row = v[i];
    if (!row.is_array() || static_cast<int>(row.size()) != count)
      schema_error(key_path + "[" + std::to_string(i) + "]",
                   "expected " + std::to_string(count) + " entries");
    std::vector<double> entries;
    for (const auto& e : row)
      entries.push_back(scalar_value(e, key_path + "[" + std::to_string(i) + "]"));
    rows.push_back(std::move(entries));
  }
  return rows;
}

template <typename T>
void sort_and_check_ids(std::vector<T>& items, const std::string& what) {
  std::sort(items.begin(), items.end(), [](const T& a, const T& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < items.size(); ++i)
    if (items[i].id == items[i - 1].id)
      schema_error(what, "duplicate id '" + items[i].id + "'");
}

json bounds_to_json(const std::vector<double>& values) {
  json arr = json::array();
  for (double v : values) {
    if (std::isinf(v))
      arr.push_back(nullptr);
    else
      arr.push_back(v);
  }
  return arr;
}

}  // namespace

const Bus* Feeder::find_bus(const std::string& id) const { return find_by_id(buses, id); }

const LineSegment* Feeder::find_line(const std::string& id) const { return find_by_id(lines, id); }

Feeder parse_feeder(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("syntax error at byte ") + std::to_string(e.byte) + ": " +
                     e.what());
  }
  if (!doc.is_object()) schema_error("$", "document root must be an object");
  expect_keys(doc, "$", {"base", "buses", "generators", "lines", "loads"});

  Feeder f;
  f.base_mva = scalar_value(require_key(doc, "base", "$"), "$.base");
  if (!(f.base_mva > 0)) schema_error("$.base", "base must be positive");

  const json& buses = require_key(doc, "buses", "$");
  if (!buses.is_array()) schema_error("$.buses", "expected an array");
  static const double kZero = 0.0;
  for (std::size_t i = 0; i < buses.size(); ++i) {
    const std::string path = "buses[" + std::to_string(i) + "]";
    const json& obj = buses[i];
    if (!obj.is_object()) schema_error(path, "expected an object");
    expect_keys(obj, path, {"id", "phases", "w_lo", "w_hi", "g_sh", "b_sh"});
    Bus bus;
    bus.id = require_string(obj, "id", path);
    bus.phases = parse_phases(obj, path);
    const int np = bus.phases.size();
    bus.w_lo = per_phase_array(obj, "w_lo", path, np, nullptr, -1.0);
    bus.w_hi = per_phase_array(obj, "w_hi", path, np, nullptr, +1.0);
    bus.g_sh = per_phase_array(obj, "g_sh", path, np, &kZero);
    bus.b_sh = per_phase_array(obj, "b_sh", path, np, &kZero);
    f.buses.push_back(std::move(bus));
  }
  sort_and_check_ids(f.buses, "buses");

  const json& gens = require_key(doc, "generators", "$");
  if (!gens.is_array()) schema_error("$.generators", "expected an array");
  for (std::size_t i = 0; i < gens.size(); ++i) {
    const std::string path = "generators[" + std::to_string(i) + "]";
    const json& obj = gens[i];
    if (!obj.is_object()) schema_error(path, "expected an object");
    expect_keys(obj, path, {"id", "bus", "phases", "p_lo", "p_hi", "q_lo", "q_hi"});
    Generator gen;
    gen.id = require_string(obj, "id", path);
    gen.bus = require_string(obj, "bus", path);
    gen.phases = parse_phases(obj, path);
    const int np = gen.phases.size();
    gen.p_lo = per_phase_array(obj, "p_lo", path, np, nullptr, -1.0);
    gen.p_hi = per_phase_array(obj, "p_hi", path, np, nullptr, +1.0);
    gen.q_lo = per_phase_array(obj, "q_lo", path, np, nullptr, -1.0);
    gen.q_hi = per_phase_array(obj, "q_hi", path, np, nullptr, +1.0);
    if (!find_by_id(f.buses, gen.bus))
      schema_error(path + ".bus", "unknown bus '" + gen.bus + "'");
    f.generators.push_back(std::move(gen));
  }
  sort_and_check_ids(f.generators, "generators");

  const json& lines = require_key(doc, "lines", "$");
  if (!lines.is_array()) schema_error("$.lines", "expected an array");
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string path = "lines[" + std::to_string(i) + "]";
    const json& obj = lines[i];
    if (!obj.is_object()) schema_error(path, "expected an object");
    expect_keys(obj, path,
                {"id", "from_bus", "to_bus", "phases", "r", "x", "g_s_from", "b_s_from",
                 "g_s_to", "b_s_to", "tau", "p_lo", "p_hi", "q_lo", "q_hi"});
    LineSegment line;
    line.id = require_string(obj, "id", path);
    line.from_bus = require_string(obj, "from_bus", path);
    line.to_bus = require_string(obj, "to_bus", path);
    line.phases = parse_phases(obj, path);
    const int np = line.phases.size();
    line.r = matrix_value(obj, "r", path, np);
    line.x = matrix_value(obj, "x", path, np);
    static const double kOne = 1.0;
    line.g_s_from = per_phase_array(obj, "g_s_from", path, np, &kZero);
    line.b_s_from = per_phase_array(obj, "b_s_from", path, np, &kZero);
    line.g_s_to = per_phase_array(obj, "g_s_to", path, np, &kZero);
    line.b_s_to = per_phase_array(obj, "b_s_to", path, np, &kZero);
    line.tau = per_phase_array(obj, "tau", path, np, &kOne);
    const double neg_inf = -kInf, pos_inf = kInf;
    line.p_lo = per_phase_array(obj, "p_lo", path, np, &neg_inf, -1.0);
    line.p_hi = per_phase_array(obj, "p_hi", path, np, &pos_inf, +1.0);
    line.q_lo = per_phase_array(obj, "q_lo", path, np, &neg_inf, -1.0);
    line.q_hi = per_phase_array(obj, "q_hi", path, np, &pos_inf, +1.0);
    if (!find_by_id(f.buses, line.from_bus))
      schema_error(path + ".from_bus", "unknown bus '" + line.from_bus + "'");
    if (!find_by_id(f.buses, line.to_bus))
      schema_error(path + ".to_bus", "unknown bus '" + line.to_bus + "'");
    f.lines.push_back(std::move(line));
  }
  sort_and_check_ids(f.lines, "lines");

  const json& loads = require_key(doc, "loads", "$");
  if (!loads.is_array()) schema_error("$.loads", "expected an array");
  for (std::size_t i = 0; i < loads.size(); ++i) {
    const std::string path = "loads[" + std::to_string(i) + "]";
    const json& obj = loads[i];
    if (!obj.is_object()) schema_error(path, "expected an object");
    expect_keys(obj, path, {"id", "bus", "connection", "phases", "a", "b", "alpha", "beta"});
    Load load;
    load.id = require_string(obj, "id", path);
    load.bus = require_string(obj, "bus", path);
    const std::string conn = require_string(obj, "connection", path);
    if (conn == "wye")
      load.connection = Connection::wye;
    else if (conn == "delta")
      load.connection = Connection::delta;
    else
      schema_error(path + ".connection", "expected 'wye' or 'delta'");
    load.phases = parse_phases(obj, path);
    const int np = load.phases.size();
    load.a = per_phase_array(obj, "a", path, np, nullptr);
    load.b = per_phase_array(obj, "b", path, np, nullptr);
    load.alpha = per_phase_array(obj, "alpha", path, np, nullptr);
    load.beta = per_phase_array(obj, "beta", path, np, nullptr);
    if (!find_by_id(f.buses, load.bus))
      schema_error(path + ".bus", "unknown bus '" + load.bus + "'");
    f.loads.push_back(std::move(load));
  }
  sort_and_check_ids(f.loads, "loads");

  return f;
}

Feeder parse_feeder_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open feeder document '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_feeder(buffer.str());
}

std::string serialize_feeder(const Feeder& f) {
  json doc;
  doc["base"] = f.base_mva;
  doc["buses"] = json::array();
  for (const Bus& bus : f.buses) {
    json obj;
    obj["id"] = bus.id;
    obj["phases"] = bus.phases.values();
    obj["w_lo"] = bounds_to_json(bus.w_lo);
    obj["w_hi"] = bounds_to_json(bus.w_hi);
    obj["g_sh"] = bus.g_sh;
    obj["b_sh"] = bus.b_sh;
    doc["buses"].push_back(std::move(obj));
  }
  doc["generators"] = json::array();
  for (const Generator& gen : f.generators) {
    json obj;
    obj["id"] = gen.id;
    obj["bus"] = gen.bus;
    obj["phases"] = gen.phases.values();
    obj["p_lo"] = bounds_to_json(gen.p_lo);
    obj["p_hi"] = bounds_to_json(gen.p_hi);
    obj["q_lo"] = bounds_to_json(gen.q_lo);
    obj["q_hi"] = bounds_to_json(gen.q_hi);
    doc["generators"].push_back(std::move(obj));
  }
  doc["lines"] = json::array();
  for (const LineSegment& line : f.lines) {
    json obj;
    obj["id"] = line.id;
    obj["from_bus"] = line.from_bus;
    obj["to_bus"] = line.to_bus;
    obj["phases"] = line.phases.values();
    obj["r"] = line.r;
    obj["x"] = line.x;
    obj["g_s_from"] = line.g_s_from;
    obj["b_s_from"] = line.b_s_from;
    obj["g_s_to"] = line.g_s_to;
    obj["b_s_to"] = line.b_s_to;
    obj["tau"] = line.tau;
    obj["p_lo"] = bounds_to_json(line.p_lo);
    obj["p_hi"] = bounds_to_json(line.p_hi);
    obj["q_lo"] = bounds_to_json(line.q_lo);
    obj["q_hi"] = bounds_to_json(line.q_hi);
    doc["lines"].push_back(std::move(obj));
  }
  doc["loads"] = json::array();
  for (const Load& load : f.loads) {
    json obj;
    obj["id"] = load.id;
    obj["bus"] = load.bus;
    obj["connection"] = load.connection == Connection::wye ? "wye" : "delta";
    obj["phases"] = load.phases.values();
    obj["a"] = load.a;
    obj["b"] = load.b;
    obj["alpha"] = load.alpha;
    obj["beta"] = load.beta;
    doc["loads"].push_back(std::move(obj));
  }
  return doc.dump(2);
}

namespace {

void check_ordered_bounds(std::vector<Diagnostic>& diags, const std::string& component,
                          const std::vector<double>& lo, const std::vector<double>& hi,
                          const char* what) {
  for (std::size_t i = 0; i < lo.size(); ++i) {
    if (lo[i] > hi[i]) {
      diags.push_back({Severity::error, component,
                       std::string(what) + " bounds out of order on phase index " +
                           std::to_string(i)});
    }
  }
}

}  // namespace

std::vector<Diagnostic> validate_feeder(const Feeder& f) {
  std::vector<Diagnostic> diags;

  for (const Bus& bus : f.buses) {
    check_ordered_bounds(diags, bus.id, bus.w_lo, bus.w_hi, "squared-voltage");
    for (std::size_t i = 0; i < bus.w_lo.size(); ++i)
      if (bus.w_lo[i] < 0)
        diags.push_back({Severity::error, bus.id, "negative squared-voltage lower bound"});
  }

  if (f.generators.empty())
    diags.push_back({Severity::error, "", "feeder has no generator"});

  for (const Generator& gen : f.generators) {
    const Bus* bus = f.find_bus(gen.bus);
    if (!bus) {
      diags.push_back({Severity::error, gen.id, "unknown bus '" + gen.bus + "'"});
      continue;
    }
    if (!gen.phases.subset_of(bus->phases))
      diags.push_back({Severity::error, gen.id,
                       "generator phases are not a subset of bus '" + gen.bus + "' phases"});
    check_ordered_bounds(diags, gen.id, gen.p_lo, gen.p_hi, "real generation");
    check_ordered_bounds(diags, gen.id, gen.q_lo, gen.q_hi, "reactive generation");
  }

  for (const LineSegment& line : f.lines) {
    const Bus* from = f.find_bus(line.from_bus);
    const Bus* to = f.find_bus(line.to_bus);
    if (!from || !to) {
      diags.push_back({Severity::error, line.id, "unknown endpoint bus"});
      continue;
    }
    if (line.from_bus == line.to_bus)
      diags.push_back({Severity::error, line.id, "line connects a bus to itself"});
    if (!line.phases.subset_of(from->phases) || !line.phases.subset_of(to->phases))
      diags.push_back({Severity::error, line.id,
                       "line phases are not a subset of both endpoint buses' phases"});
    const int np = line.phases.size();
    for (int i = 0; i < np; ++i) {
      for (int j = i + 1; j < np; ++j) {
        if (std::abs(line.r[i][j] - line.r[j][i]) > 1e-12 ||
            std::abs(line.x[i][j] - line.x[j][i]) > 1e-12) {
          diags.push_back({Severity::error, line.id, "impedance matrices must be symmetric"});
          i = np;  // one diagnostic per line is enough
          break;
        }
      }
    }
    for (double t : line.tau)
      if (!(t > 0))
        diags.push_back({Severity::error, line.id, "tap ratio must be positive"});
    check_ordered_bounds(diags, line.id, line.p_lo, line.p_hi, "real flow");
    check_ordered_bounds(diags, line.id, line.q_lo, line.q_hi, "reactive flow");
  }

  for (const Load& load : f.loads) {
    const Bus* bus = f.find_bus(load.bus);
    if (!bus) {
      diags.push_back({Severity::error, load.id, "unknown bus '" + load.bus + "'"});
      continue;
    }
    if (!load.phases.subset_of(bus->phases))
      diags.push_back({Severity::error, load.id,
                       "load phases are not a subset of bus '" + load.bus + "' phases"});
    for (std::size_t i = 0; i < load.alpha.size(); ++i)
      if (load.alpha[i] < 0 || load.beta[i] < 0)
        diags.push_back({Severity::error, load.id, "voltage exponents must be nonnegative"});
    if (load.connection == Connection::delta && load.phases.size() != 3)
      diags.push_back({Severity::error, load.id,
                       "delta loads require all three phases (coupling rows reference "
                       "phases 1-3 explicitly)"});
  }

  // Bus-line graph connectivity.
  if (!f.buses.empty()) {
    std::map<std::string, std::vector<std::string>> adjacency;
    for (const LineSegment& line : f.lines) {
      adjacency[line.from_bus].push_back(line.to_bus);
      adjacency[line.to_bus].push_back(line.from_bus);
    }
    std::set<std::string> seen;
    std::deque<std::string> frontier{f.buses.front().id};
    seen.insert(f.buses.front().id);
    while (!frontier.empty()) {
      std::string current = frontier.front();
      frontier.pop_front();
      for (const std::string& next : adjacency[current])
        if (seen.insert(next).second) frontier.push_back(next);
    }
    if (seen.size() != f.buses.size())
      diags.push_back({Severity::error, "",
                       "bus-line graph is disconnected (" + std::to_string(seen.size()) + " of " +
                           std::to_string(f.buses.size()) + " buses reachable)"});
  }

  return diags;
}

bool has_errors(const std::vector<Diagnostic>& diags) {
  return std::any_of(diags.begin(), diags.end(),
                     [](const Diagnostic& d) { return d.severity == Severity::error; });
}

LoadCoefficients derive_load_coefficients(double p_ref, double q_ref, LoadKind kind) {
  double exponent = 0.0;
  switch (kind) {
    case LoadKind::constant_power: exponent = 0.0; break;
    case LoadKind::constant_current: exponent = 1.0; break;
    case LoadKind::constant_impedance: exponent = 2.0; break;
  }
  return {p_ref, q_ref, exponent, exponent};
}

}  // namespace dopf

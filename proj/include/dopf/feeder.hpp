#pragma once

#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace dopf {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// An ascending, duplicate-free subset of the three phases {1,2,3}.
class PhaseSet {
 public:
  PhaseSet() = default;
  /// Sorts and validates; throws std::invalid_argument on empty sets,
  /// duplicates, or values outside {1,2,3}.
  explicit PhaseSet(std::vector<int> phases);

  int size() const { return static_cast<int>(phases_.size()); }
  bool contains(int phase) const;
  /// Position of `phase` within the set, -1 if absent.
  int index_of(int phase) const;
  bool subset_of(const PhaseSet& other) const;
  const std::vector<int>& values() const { return phases_; }

  bool operator==(const PhaseSet&) const = default;

 private:
  std::vector<int> phases_;
};

// Per-phase vectors below are aligned with the component's PhaseSet order.

struct Bus {
  std::string id;
  PhaseSet phases;
  std::vector<double> w_lo, w_hi;  // squared-voltage bounds (p.u.^2)
  std::vector<double> g_sh, b_sh;  // shunt conductance / susceptance (p.u.)

  bool operator==(const Bus&) const = default;
};

struct Generator {
  std::string id;
  std::string bus;
  PhaseSet phases;
  std::vector<double> p_lo, p_hi, q_lo, q_hi;  // +-inf allowed

  bool operator==(const Generator&) const = default;
};

/// A branch or transformer. Plain branches carry tau = 1.
struct LineSegment {
  std::string id;
  std::string from_bus, to_bus;
  PhaseSet phases;
  std::vector<std::vector<double>> r, x;  // |P|x|P|, row-major, symmetric
  std::vector<double> g_s_from, b_s_from, g_s_to, b_s_to;
  std::vector<double> tau;                     // per-phase tap ratio, > 0
  std::vector<double> p_lo, p_hi, q_lo, q_hi;  // flow bounds, both directions

  bool operator==(const LineSegment&) const = default;
};

enum class Connection { wye, delta };

/// Voltage-dependent load: per phase, demand follows
///   p = (a*alpha/2)(w_hat - 1) + a,  q = (b*beta/2)(w_hat - 1) + b
/// where w_hat is the squared voltage seen by the load.
struct Load {
  std::string id;
  std::string bus;
  Connection connection = Connection::wye;
  PhaseSet phases;
  std::vector<double> a, b;        // reference real/reactive power (p.u.)
  std::vector<double> alpha, beta; // nonnegative voltage exponents

  bool operator==(const Load&) const = default;
};

/// Validated in-memory network. Collections are sorted by id; ids are
/// unique within each collection.
struct Feeder {
  double base_mva = 1.0;
  std::vector<Bus> buses;
  std::vector<Generator> generators;
  std::vector<LineSegment> lines;
  std::vector<Load> loads;

  const Bus* find_bus(const std::string& id) const;
  const LineSegment* find_line(const std::string& id) const;

  bool operator==(const Feeder&) const = default;
};

/// Thrown by parse_feeder: syntax errors carry the byte position reported
/// by the JSON parser, schema violations carry the offending field path.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Severity { error, warning };

struct Diagnostic {
  Severity severity = Severity::error;
  std::string component;  // id of the offending feeder component
  std::string message;
};

/// Parses a feeder document (see docs/feeder-format.md). Unknown keys are
/// rejected. Cross-references (generator/load/line -> bus) must resolve.
Feeder parse_feeder(const std::string& text);
Feeder parse_feeder_file(const std::string& path);

/// Document emission; parse_feeder(serialize_feeder(f)) == f.
std::string serialize_feeder(const Feeder& f);

/// Checks every type invariant plus phase consistency across attachments
/// and bus-line graph connectivity. Empty result means valid.
std::vector<Diagnostic> validate_feeder(const Feeder& f);

bool has_errors(const std::vector<Diagnostic>& diags);

enum class LoadKind { constant_power, constant_current, constant_impedance };

struct LoadCoefficients {
  double a, b, alpha, beta;
};

/// Maps a reference operating point to voltage-dependent load coefficients:
/// alpha = beta = 0, 1, 2 for constant power, current, impedance.
LoadCoefficients derive_load_coefficients(double p_ref, double q_ref, LoadKind kind);

}  // namespace dopf

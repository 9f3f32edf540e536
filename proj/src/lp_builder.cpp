#include "dopf/lp_builder.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>

namespace dopf {

namespace {

constexpr double kSqrt3 = 1.7320508075688772;

const char* kind_name(VarKind kind) {
  switch (kind) {
    case VarKind::p_gen: return "p_gen";
    case VarKind::q_gen: return "q_gen";
    case VarKind::w: return "w";
    case VarKind::p_bus_load: return "p_bus_load";
    case VarKind::q_bus_load: return "q_bus_load";
    case VarKind::p_load: return "p_load";
    case VarKind::q_load: return "q_load";
    case VarKind::p_flow: return "p_flow";
    case VarKind::q_flow: return "q_flow";
  }
  return "?";
}

const char* family_name(RowFamily family) {
  switch (family) {
    case RowFamily::balance_p: return "balance_p";
    case RowFamily::balance_q: return "balance_q";
    case RowFamily::load_p: return "load_p";
    case RowFamily::load_q: return "load_q";
    case RowFamily::load_link: return "load_link";
    case RowFamily::loss_p: return "loss_p";
    case RowFamily::loss_q: return "loss_q";
    case RowFamily::drop: return "drop";
  }
  return "?";
}

// Accumulates one row's coefficients keyed by column; emission is sorted
// and drops exact zeros.
class RowBuilder {
 public:
  RowBuilder(RowTag tag, double rhs) : tag_(std::move(tag)), rhs_(rhs) {}

  void add(int col, double coeff) { coeffs_[col] += coeff; }

  RowSpec finish() && {
    RowSpec row{std::move(tag_), {}, rhs_};
    row.coeffs.reserve(coeffs_.size());
    for (const auto& [col, coeff] : coeffs_)
      if (coeff != 0.0) row.coeffs.emplace_back(col, coeff);
    return row;
  }

 private:
  RowTag tag_;
  double rhs_;
  std::map<int, double> coeffs_;
};

// 1 -> 2 -> 3 -> 1
int cyclic_next(int phase) { return phase % 3 + 1; }

const Generator* find_generator(const Feeder& f, const std::string& id) {
  auto it = std::lower_bound(
      f.generators.begin(), f.generators.end(), id,
      [](const Generator& gen, const std::string& key) { return gen.id < key; });
  return (it != f.generators.end() && it->id == id) ? &*it : nullptr;
}

}  // namespace

std::string to_string(const VariableKey& key) {
  std::string s = std::string(kind_name(key.kind)) + ":" + key.owner + ":" +
                  std::to_string(key.phase);
  if (key.kind == VarKind::p_flow || key.kind == VarKind::q_flow)
    s += key.direction == FlowDirection::from_to ? ":ft" : ":tf";
  return s;
}

std::string to_string(const RowTag& tag) {
  return std::string(tag.owner_kind == OwnerKind::bus ? "bus" : "line") + ":" + tag.owner + ":" +
         family_name(tag.family);
}

std::vector<VariableKey> index_variables(const Feeder& f) {
  std::vector<VariableKey> table;
  for (const Generator& gen : f.generators)
    for (int phase : gen.phases.values()) {
      table.push_back({VarKind::p_gen, gen.id, phase, FlowDirection::from_to});
      table.push_back({VarKind::q_gen, gen.id, phase, FlowDirection::from_to});
    }
  for (const Bus& bus : f.buses)
    for (int phase : bus.phases.values())
      table.push_back({VarKind::w, bus.id, phase, FlowDirection::from_to});
  for (const Load& load : f.loads)
    for (int phase : load.phases.values()) {
      table.push_back({VarKind::p_bus_load, load.id, phase, FlowDirection::from_to});
      table.push_back({VarKind::q_bus_load, load.id, phase, FlowDirection::from_to});
      table.push_back({VarKind::p_load, load.id, phase, FlowDirection::from_to});
      table.push_back({VarKind::q_load, load.id, phase, FlowDirection::from_to});
    }
  for (const LineSegment& line : f.lines)
    for (int phase : line.phases.values()) {
      table.push_back({VarKind::p_flow, line.id, phase, FlowDirection::from_to});
      table.push_back({VarKind::q_flow, line.id, phase, FlowDirection::from_to});
      table.push_back({VarKind::p_flow, line.id, phase, FlowDirection::to_from});
      table.push_back({VarKind::q_flow, line.id, phase, FlowDirection::to_from});
    }
  return table;
}

VarIndex::VarIndex(const std::vector<VariableKey>& table) {
  for (std::size_t i = 0; i < table.size(); ++i) {
    const VariableKey& key = table[i];
    index_[{static_cast<int>(key.kind), key.owner, key.phase,
            static_cast<int>(key.direction)}] = static_cast<int>(i);
  }
}

int VarIndex::at(VarKind kind, const std::string& owner, int phase,
                 FlowDirection direction) const {
  auto it = index_.find({static_cast<int>(kind), owner, phase, static_cast<int>(direction)});
  if (it == index_.end())
    throw std::out_of_range("no variable " +
                            to_string(VariableKey{kind, owner, phase, direction}));
  return it->second;
}

std::vector<RowSpec> build_power_balance(const Feeder& f, const VarIndex& vars) {
  std::vector<RowSpec> rows;
  for (const Bus& bus : f.buses) {
    for (int phase : bus.phases.values()) {
      const int pi = bus.phases.index_of(phase);
      RowBuilder p_row({OwnerKind::bus, bus.id, RowFamily::balance_p}, 0.0);
      RowBuilder q_row({OwnerKind::bus, bus.id, RowFamily::balance_q}, 0.0);

      for (const LineSegment& line : f.lines) {
        if (!line.phases.contains(phase)) continue;
        if (line.from_bus == bus.id) {
          p_row.add(vars.at(VarKind::p_flow, line.id, phase, FlowDirection::from_to), 1.0);
          q_row.add(vars.at(VarKind::q_flow, line.id, phase, FlowDirection::from_to), 1.0);
        }
        if (line.to_bus == bus.id) {
          p_row.add(vars.at(VarKind::p_flow, line.id, phase, FlowDirection::to_from), 1.0);
          q_row.add(vars.at(VarKind::q_flow, line.id, phase, FlowDirection::to_from), 1.0);
        }
      }
      for (const Load& load : f.loads) {
        if (load.bus != bus.id || !load.phases.contains(phase)) continue;
        p_row.add(vars.at(VarKind::p_bus_load, load.id, phase), 1.0);
        q_row.add(vars.at(VarKind::q_bus_load, load.id, phase), 1.0);
      }
      const int w_col = vars.at(VarKind::w, bus.id, phase);
      p_row.add(w_col, bus.g_sh[pi]);
      q_row.add(w_col, -bus.b_sh[pi]);
      for (const Generator& gen : f.generators) {
        if (gen.bus != bus.id || !gen.phases.contains(phase)) continue;
        p_row.add(vars.at(VarKind::p_gen, gen.id, phase), -1.0);
        q_row.add(vars.at(VarKind::q_gen, gen.id, phase), -1.0);
      }
      rows.push_back(std::move(p_row).finish());
      rows.push_back(std::move(q_row).finish());
    }
  }
  return rows;
}

std::vector<RowSpec> build_load_model(const Feeder& f, const VarIndex& vars) {
  std::vector<RowSpec> rows;
  for (const Load& load : f.loads) {
    const bool delta = load.connection == Connection::delta;
    // Squared voltage seen by the load, expressed in the bus variable:
    // w for wye, 3w for delta.
    const double w_scale = delta ? 3.0 : 1.0;

    for (int phase : load.phases.values()) {
      const int pi = load.phases.index_of(phase);
      const int w_col = vars.at(VarKind::w, load.bus, phase);

      RowBuilder p_row({OwnerKind::bus, load.bus, RowFamily::load_p},
                       load.a[pi] * (1.0 - load.alpha[pi] / 2.0));
      p_row.add(vars.at(VarKind::p_load, load.id, phase), 1.0);
      p_row.add(w_col, -load.a[pi] * load.alpha[pi] / 2.0 * w_scale);
      rows.push_back(std::move(p_row).finish());

      RowBuilder q_row({OwnerKind::bus, load.bus, RowFamily::load_q},
                       load.b[pi] * (1.0 - load.beta[pi] / 2.0));
      q_row.add(vars.at(VarKind::q_load, load.id, phase), 1.0);
      q_row.add(w_col, -load.b[pi] * load.beta[pi] / 2.0 * w_scale);
      rows.push_back(std::move(q_row).finish());
    }

    if (!delta) {
      for (int phase : load.phases.values()) {
        RowBuilder p_link({OwnerKind::bus, load.bus, RowFamily::load_link}, 0.0);
        p_link.add(vars.at(VarKind::p_bus_load, load.id, phase), 1.0);
        p_link.add(vars.at(VarKind::p_load, load.id, phase), -1.0);
        rows.push_back(std::move(p_link).finish());

        RowBuilder q_link({OwnerKind::bus, load.bus, RowFamily::load_link}, 0.0);
        q_link.add(vars.at(VarKind::q_bus_load, load.id, phase), 1.0);
        q_link.add(vars.at(VarKind::q_load, load.id, phase), -1.0);
        rows.push_back(std::move(q_link).finish());
      }
      continue;
    }

    // Delta coupling. Column shorthands, phases 1..3.
    const auto pb = [&](int ph) { return vars.at(VarKind::p_bus_load, load.id, ph); };
    const auto qb = [&](int ph) { return vars.at(VarKind::q_bus_load, load.id, ph); };
    const auto pd = [&](int ph) { return vars.at(VarKind::p_load, load.id, ph); };
    const auto qd = [&](int ph) { return vars.at(VarKind::q_load, load.id, ph); };
    const RowTag link_tag{OwnerKind::bus, load.bus, RowFamily::load_link};

    {  // total withdrawal equals total consumption, per power kind
      RowBuilder sum_p(link_tag, 0.0);
      RowBuilder sum_q(link_tag, 0.0);
      for (int ph = 1; ph <= 3; ++ph) {
        sum_p.add(pb(ph), 1.0);
        sum_p.add(pd(ph), -1.0);
        sum_q.add(qb(ph), 1.0);
        sum_q.add(qd(ph), -1.0);
      }
      rows.push_back(std::move(sum_p).finish());
      rows.push_back(std::move(sum_q).finish());
    }
    {
      RowBuilder row(link_tag, 0.0);
      row.add(pb(2), 1.5);
      row.add(qb(2), -kSqrt3 / 2.0);
      row.add(pd(2), -1.0);
      row.add(pd(1), -0.5);
      row.add(qd(1), kSqrt3 / 2.0);
      rows.push_back(std::move(row).finish());
    }
    {
      RowBuilder row(link_tag, 0.0);
      row.add(pb(2), kSqrt3 / 2.0);
      row.add(qb(2), 1.5);
      row.add(pd(1), -kSqrt3 / 2.0);
      row.add(qd(1), -0.5);
      row.add(qd(2), -1.0);
      rows.push_back(std::move(row).finish());
    }
    {
      RowBuilder row(link_tag, 0.0);
      row.add(qb(2), kSqrt3);
      row.add(pb(3), 1.5);
      row.add(qb(3), -kSqrt3 / 2.0);
      row.add(pd(1), -0.5);
      row.add(qd(1), -kSqrt3 / 2.0);
      row.add(pd(3), -1.0);
      rows.push_back(std::move(row).finish());
    }
    {
      RowBuilder row(link_tag, 0.0);
      row.add(pb(2), -kSqrt3);
      row.add(pb(3), kSqrt3 / 2.0);
      row.add(qb(3), 1.5);
      row.add(pd(1), kSqrt3 / 2.0);
      row.add(qd(1), -0.5);
      row.add(qd(3), -1.0);
      rows.push_back(std::move(row).finish());
    }
  }
  return rows;
}

void build_m_matrices(const LineSegment& line, Eigen::MatrixXd& mp, Eigen::MatrixXd& mq) {
  const int np = line.phases.size();
  mp.resize(np, np);
  mq.resize(np, np);
  const auto& phases = line.phases.values();
  for (int i = 0; i < np; ++i) {
    for (int j = 0; j < np; ++j) {
      const double r = line.r[i][j];
      const double x = line.x[i][j];
      if (i == j) {
        mp(i, j) = -2.0 * r;
        mq(i, j) = -2.0 * x;
      } else if (phases[j] == cyclic_next(phases[i])) {
        mp(i, j) = r - kSqrt3 * x;
        mq(i, j) = x + kSqrt3 * r;
      } else {
        mp(i, j) = r + kSqrt3 * x;
        mq(i, j) = x - kSqrt3 * r;
      }
    }
  }
}

std::vector<RowSpec> build_flow_equations(const Feeder& f, const VarIndex& vars) {
  std::vector<RowSpec> rows;
  Eigen::MatrixXd mp, mq;
  for (const LineSegment& line : f.lines) {
    build_m_matrices(line, mp, mq);
    const auto& phases = line.phases.values();
    const int np = line.phases.size();

    for (int i = 0; i < np; ++i) {
      const int phase = phases[i];
      const int w_from = vars.at(VarKind::w, line.from_bus, phase);
      const int w_to = vars.at(VarKind::w, line.to_bus, phase);

      RowBuilder p_loss({OwnerKind::line, line.id, RowFamily::loss_p}, 0.0);
      p_loss.add(vars.at(VarKind::p_flow, line.id, phase, FlowDirection::from_to), 1.0);
      p_loss.add(vars.at(VarKind::p_flow, line.id, phase, FlowDirection::to_from), 1.0);
      p_loss.add(w_from, -line.g_s_from[i]);
      p_loss.add(w_to, -line.g_s_to[i]);
      rows.push_back(std::move(p_loss).finish());

      RowBuilder q_loss({OwnerKind::line, line.id, RowFamily::loss_q}, 0.0);
      q_loss.add(vars.at(VarKind::q_flow, line.id, phase, FlowDirection::from_to), 1.0);
      q_loss.add(vars.at(VarKind::q_flow, line.id, phase, FlowDirection::to_from), 1.0);
      q_loss.add(w_from, line.b_s_from[i]);
      q_loss.add(w_to, line.b_s_to[i]);
      rows.push_back(std::move(q_loss).finish());

      RowBuilder drop({OwnerKind::line, line.id, RowFamily::drop}, 0.0);
      drop.add(w_from, 1.0);
      drop.add(w_to, -line.tau[i]);
      for (int j = 0; j < np; ++j) {
        const int other = phases[j];
        drop.add(vars.at(VarKind::p_flow, line.id, other, FlowDirection::from_to), mp(i, j));
        drop.add(vars.at(VarKind::q_flow, line.id, other, FlowDirection::from_to), mq(i, j));
        drop.add(vars.at(VarKind::w, line.from_bus, other),
                 -mp(i, j) * line.g_s_from[j] + mq(i, j) * line.b_s_from[j]);
      }
      rows.push_back(std::move(drop).finish());
    }
  }
  return rows;
}

LinearSystem assemble_centralized(const Feeder& f) {
  LinearSystem ls;
  ls.var_table = index_variables(f);
  const VarIndex vars(ls.var_table);
  const int n = static_cast<int>(ls.var_table.size());

  std::vector<RowSpec> rows = build_power_balance(f, vars);
  for (auto& row : build_load_model(f, vars)) rows.push_back(std::move(row));
  for (auto& row : build_flow_equations(f, vars)) rows.push_back(std::move(row));
  const int m = static_cast<int>(rows.size());

  std::vector<Eigen::Triplet<double>> triplets;
  ls.b.resize(m);
  ls.row_tags.reserve(m);
  for (int i = 0; i < m; ++i) {
    for (const auto& [col, coeff] : rows[i].coeffs) triplets.emplace_back(i, col, coeff);
    ls.b[i] = rows[i].rhs;
    ls.row_tags.push_back(rows[i].tag);
  }
  ls.A.resize(m, n);
  ls.A.setFromTriplets(triplets.begin(), triplets.end());

  ls.c = Eigen::VectorXd::Zero(n);
  ls.x_lo = Eigen::VectorXd::Constant(n, -kInf);
  ls.x_hi = Eigen::VectorXd::Constant(n, kInf);
  for (int col = 0; col < n; ++col) {
    const VariableKey& key = ls.var_table[col];
    switch (key.kind) {
      case VarKind::p_gen: {
        ls.c[col] = 1.0;
        const Generator* gen = find_generator(f, key.owner);
        const int pi = gen->phases.index_of(key.phase);
        ls.x_lo[col] = gen->p_lo[pi];
        ls.x_hi[col] = gen->p_hi[pi];
        break;
      }
      case VarKind::q_gen: {
        const Generator* gen = find_generator(f, key.owner);
        const int pi = gen->phases.index_of(key.phase);
        ls.x_lo[col] = gen->q_lo[pi];
        ls.x_hi[col] = gen->q_hi[pi];
        break;
      }
      case VarKind::w: {
        const Bus* bus = f.find_bus(key.owner);
        const int pi = bus->phases.index_of(key.phase);
        ls.x_lo[col] = bus->w_lo[pi];
        ls.x_hi[col] = bus->w_hi[pi];
        break;
      }
      case VarKind::p_flow: {
        const LineSegment* line = f.find_line(key.owner);
        const int pi = line->phases.index_of(key.phase);
        ls.x_lo[col] = line->p_lo[pi];
        ls.x_hi[col] = line->p_hi[pi];
        break;
      }
      case VarKind::q_flow: {
        const LineSegment* line = f.find_line(key.owner);
        const int pi = line->phases.index_of(key.phase);
        ls.x_lo[col] = line->q_lo[pi];
        ls.x_hi[col] = line->q_hi[pi];
        break;
      }
      default:
        break;  // load withdrawals/consumptions stay unbounded
    }
  }
  return ls;
}

void dump_linear_system(const LinearSystem& ls, std::ostream& out) {
  out.precision(17);
  out << "# rows cols\n" << ls.rows() << " " << ls.cols() << "\n";
  out << "# triplets: row col value\n";
  for (int i = 0; i < ls.A.outerSize(); ++i)
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(ls.A, i); it; ++it)
      out << it.row() << " " << it.col() << " " << it.value() << "\n";
  out << "# b\n";
  for (int i = 0; i < ls.rows(); ++i) out << ls.b[i] << "\n";
  out << "# c lo hi key\n";
  for (int j = 0; j < ls.cols(); ++j)
    out << ls.c[j] << " " << ls.x_lo[j] << " " << ls.x_hi[j] << " "
        << to_string(ls.var_table[j]) << "\n";
  out << "# row tags\n";
  for (const RowTag& tag : ls.row_tags) out << to_string(tag) << "\n";
}

}  // namespace dopf

#pragma once

#include "bform/common.hpp"
#include "bform/formation_analysis.hpp"
#include "bform/graph.hpp"
#include "bform/scenario.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace bform {

/// One row of the trace file.
struct TraceRecord {
  double t = 0.0;
  Vec p, v, p_hat, v_hat, u;
  std::vector<double> edge_dp;  ///< |position part of the edge error| per PE edge
  std::vector<double> edge_dv;
  double delta_p = 0.0;
  double delta_v = 0.0;
  double track_p = 0.0;
  double track_v = 0.0;
  double lambda_min = 0.0;  ///< lambda_min(M), or min over edge observers
  double cond = 1.0;        ///< cond(M), or max over edge observers
  double lyapunov = 0.0;
  double min_edge_distance = 0.0;
};

inline std::string axis_name(int c, int d) {
  static const char* xyz[] = {"x", "y", "z"};
  return d <= 3 ? xyz[c] : "a" + std::to_string(c);
}

inline std::vector<std::string> trace_header(int n, int d, const std::vector<Edge>& pe_edges) {
  std::vector<std::string> cols{"t"};
  for (const char* q : {"p", "v", "p_hat", "v_hat", "u"})
    for (int i = 0; i < n; ++i)
      for (int c = 0; c < d; ++c) cols.push_back(std::string(q) + std::to_string(i + 1) + "_" + axis_name(c, d));
  for (const auto& e : pe_edges) {
    const std::string tag = "edge" + std::to_string(e.from + 1) + "_" + std::to_string(e.to + 1);
    cols.push_back(tag + "_dp");
    cols.push_back(tag + "_dv");
  }
  for (const char* name : {"delta_p", "delta_v", "track_p", "track_v", "lambda_min_M", "cond_M", "lyapunov",
                           "min_edge_distance"})
    cols.emplace_back(name);
  return cols;
}

inline void write_trace(std::ostream& out, const std::vector<TraceRecord>& records, int n, int d,
                        const std::vector<Edge>& pe_edges) {
  const auto header = trace_header(n, d, pe_edges);
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n';
  std::string line;
  for (const auto& r : records) {
    line = format_double(r.t);
    auto put = [&line](double x) {
      line += ',';
      line += format_double(x);
    };
    for (const Vec* block : {&r.p, &r.v, &r.p_hat, &r.v_hat, &r.u})
      for (Eigen::Index i = 0; i < block->size(); ++i) put((*block)(i));
    for (std::size_t k = 0; k < r.edge_dp.size(); ++k) {
      put(r.edge_dp[k]);
      put(r.edge_dv[k]);
    }
    for (double x : {r.delta_p, r.delta_v, r.track_p, r.track_v, r.lambda_min, r.cond, r.lyapunov,
                     r.min_edge_distance})
      put(x);
    out << line << '\n';
  }
}

/// Column-oriented view of a trace CSV.
struct TraceTable {
  std::vector<std::string> names;
  std::map<std::string, std::vector<double>> columns;

  const std::vector<double>& column(const std::string& name) const {
    auto it = columns.find(name);
    if (it == columns.end()) throw ValidationError("trace has no column '" + name + "'");
    return it->second;
  }
  std::size_t rows() const { return columns.empty() ? 0 : columns.begin()->second.size(); }
};

inline TraceTable read_trace(std::istream& in) {
  TraceTable tab;
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("trace file is empty");
  {
    std::istringstream hs(line);
    std::string name;
    while (std::getline(hs, name, ',')) tab.names.push_back(detail::trim(name));
  }
  std::vector<std::vector<double>> cols(tab.names.size());
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::size_t c = 0;
    while (std::getline(ls, cell, ',')) {
      if (c >= cols.size()) throw ValidationError("trace row " + std::to_string(row) + " has too many fields");
      cols[c].push_back(detail::parse_number(cell, "trace row " + std::to_string(row)));
      ++c;
    }
    if (c != cols.size()) throw ValidationError("trace row " + std::to_string(row) + " has too few fields");
  }
  for (std::size_t c = 0; c < cols.size(); ++c) tab.columns[tab.names[c]] = std::move(cols[c]);
  return tab;
}

inline TraceTable load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open trace file '" + path + "'");
  return read_trace(in);
}

/// True-position bearing snapshots from the p<i>_<axis> columns.
inline std::vector<BearingSnapshot> bearing_trace(const TraceTable& tab, const FormationGraph& g) {
  const int n = g.vertex_count(), d = g.dimension();
  const auto& t = tab.column("t");
  std::vector<const std::vector<double>*> cols;
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < d; ++c) cols.push_back(&tab.column("p" + std::to_string(i + 1) + "_" + axis_name(c, d)));
  std::vector<BearingSnapshot> out;
  out.reserve(t.size());
  Vec p(n * d);
  for (std::size_t r = 0; r < t.size(); ++r) {
    for (int k = 0; k < n * d; ++k) p(k) = (*cols[k])[r];
    out.push_back(bearings(p, g, t[r]));
  }
  return out;
}

struct ExponentialFit {
  double slope = 0.0;  ///< d/dt log|x|, 1/s
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t samples = 0;
};

/// Least squares of log(values) against time over [t_start, t_end]. Samples at
/// or below `floor` are skipped; they sit at machine precision and carry no
/// decay information.
inline ExponentialFit fit_exponential(const std::vector<double>& times, const std::vector<double>& values,
                                      double t_start, double t_end, double floor = 1e-13) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (times[k] < t_start || times[k] > t_end) continue;
    if (!(values[k] > floor) || !std::isfinite(values[k])) continue;
    const double x = times[k], y = std::log(values[k]);
    sx += x, sy += y, sxx += x * x, sxy += x * y, syy += y * y;
    ++n;
  }
  ExponentialFit fit;
  fit.samples = n;
  if (n < 2) return fit;
  const double nn = static_cast<double>(n);
  const double cov = sxy - sx * sy / nn, varx = sxx - sx * sx / nn, vary = syy - sy * sy / nn;
  if (varx <= 0) return fit;
  fit.slope = cov / varx;
  fit.intercept = (sy - fit.slope * sx) / nn;
  fit.r2 = vary > 0 ? (cov * cov) / (varx * vary) : 1.0;
  return fit;
}

}  // namespace bform

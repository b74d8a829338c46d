#pragma once

#include "bform/common.hpp"
#include "bform/controller.hpp"
#include "bform/dynamics.hpp"
#include "bform/formation_analysis.hpp"
#include "bform/graph.hpp"
#include "bform/observer_centralized.hpp"
#include "bform/observer_decentralized.hpp"
#include "bform/sensing.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace bform {

enum class Mode { centralized_observer, decentralized_observer, observer_based_control, truth_feedback_control };
enum class Feedback { decentralized, centralized, truth };
enum class ReferenceKind { paper, fixed, circular };

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::centralized_observer: return "centralized-observer";
    case Mode::decentralized_observer: return "decentralized-observer";
    case Mode::observer_based_control: return "observer-based-control";
    case Mode::truth_feedback_control: return "truth-feedback-control";
  }
  return "?";
}

inline std::string to_string(Feedback f) {
  switch (f) {
    case Feedback::decentralized: return "decentralized";
    case Feedback::centralized: return "centralized";
    case Feedback::truth: return "truth";
  }
  return "?";
}

inline std::string to_string(ReferenceKind k) {
  switch (k) {
    case ReferenceKind::paper: return "paper";
    case ReferenceKind::fixed: return "fixed";
    case ReferenceKind::circular: return "circular";
  }
  return "?";
}

inline std::string to_string(LeaderGainForm f) { return f == LeaderGainForm::gained ? "gained" : "unit"; }

/// Full description of one experiment. Vertex indices are 0-based here;
/// scenario files use 1-based indices.
struct Scenario {
  std::string name = "unnamed";
  Mode mode = Mode::decentralized_observer;
  Feedback feedback = Feedback::decentralized;
  int d = 3;
  int n = 0;
  int leader = 0;
  std::vector<Edge> edges;
  std::vector<Edge> pe_edges;  ///< declared PE bearings
  std::optional<int> ibr_edge_threshold;
  double duration = 30.0;
  double dt = 1e-3;
  NoiseModel noise{};
  int network_delay = 0;

  CentralizedGains central;
  EdgeGains edge;
  DistributedGains distributed;
  ControllerGains controller;

  ReferenceKind reference = ReferenceKind::paper;
  Vec reference_positions;  ///< fixed positions or circular anchors
  double reference_radius = 1.0;
  double reference_omega = 1.0;

  std::optional<Vec> initial_p;  ///< true state; defaults to the reference at t = 0
  std::optional<Vec> initial_v;
  Vec initial_p_hat;
  Vec initial_v_hat;

  double pe_window = 1.0;
  double pe_threshold = kDefaultPeThreshold;

  FormationGraph graph() const { return FormationGraph(n, edges, d); }

  std::unique_ptr<ReferenceTrajectory> make_reference() const {
    switch (reference) {
      case ReferenceKind::paper: return std::make_unique<PaperReference>();
      case ReferenceKind::fixed: return std::make_unique<StaticReference>(reference_positions, d);
      case ReferenceKind::circular:
        return std::make_unique<CircularReference>(reference_positions, d, reference_radius, reference_omega);
    }
    return nullptr;
  }

  /// Declared PE edges as indices into `edges`.
  std::set<int> pe_edge_indices() const {
    const FormationGraph g = graph();
    std::set<int> out;
    for (const auto& e : pe_edges) {
      const int k = g.edge_index(e.from, e.to);
      if (k < 0) throw ValidationError("declared PE edge " + edge_label(e) + " is not an edge of the graph");
      out.insert(k);
    }
    return out;
  }

  bool uses_centralized() const {
    return mode == Mode::centralized_observer ||
           (mode == Mode::observer_based_control && feedback == Feedback::centralized);
  }
  bool uses_decentralized() const {
    return mode == Mode::decentralized_observer ||
           (mode == Mode::observer_based_control && feedback == Feedback::decentralized);
  }
  bool closes_loop() const { return mode == Mode::observer_based_control || mode == Mode::truth_feedback_control; }
};

// ---------------------------------------------------------------------------
// Text helpers
// ---------------------------------------------------------------------------

/// Shortest decimal that round-trips to the same double.
inline std::string format_double(double x) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_number(const std::string& raw, const std::string& where) {
  const std::string s = trim(raw);
  double x = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ValidationError(where + ": expected a number, got '" + s + "'");
  return x;
}

inline std::vector<double> parse_numbers(const std::string& raw, const std::string& where) {
  std::string s = raw;
  for (char& c : s)
    if (c == ',' || c == '[' || c == ']') c = ' ';
  std::istringstream in(s);
  std::vector<double> out;
  std::string tok;
  while (in >> tok) out.push_back(parse_number(tok, where));
  return out;
}

/// Rows separated by ';'.
inline std::vector<std::vector<double>> parse_rows(const std::string& raw, const std::string& where) {
  std::vector<std::vector<double>> rows;
  std::string row;
  std::istringstream in(raw);
  while (std::getline(in, row, ';'))
    if (!trim(row).empty()) rows.push_back(parse_numbers(row, where));
  return rows;
}

/// "c", "c * I" or explicit rows "[a b; c d]".
inline Mat parse_matrix(const std::string& raw, int size, const std::string& where) {
  std::string s = trim(raw);
  if (s.find(';') == std::string::npos && s.find('[') == std::string::npos) {
    static const std::regex scaled(R"(^\s*([^*\s]+)\s*(\*\s*I)?\s*$)");
    std::smatch m;
    if (!std::regex_match(s, m, scaled)) throw ValidationError(where + ": cannot read matrix '" + s + "'");
    return parse_number(m[1].str(), where) * Mat::Identity(size, size);
  }
  const auto rows = parse_rows(s, where);
  if (static_cast<int>(rows.size()) != size)
    throw ValidationError(where + ": expected " + std::to_string(size) + " rows, got " + std::to_string(rows.size()));
  Mat M(size, size);
  for (int r = 0; r < size; ++r) {
    if (static_cast<int>(rows[r].size()) != size)
      throw ValidationError(where + ": row " + std::to_string(r + 1) + " needs " + std::to_string(size) + " entries");
    for (int c = 0; c < size; ++c) M(r, c) = rows[r][c];
  }
  return M;
}

/// Per-agent vectors as rows "x y z; x y z; ...", stacked.
inline Vec parse_stacked(const std::string& raw, int n, int d, const std::string& where) {
  const auto rows = parse_rows(raw, where);
  if (static_cast<int>(rows.size()) != n)
    throw ValidationError(where + ": expected " + std::to_string(n) + " agent rows, got " + std::to_string(rows.size()));
  Vec out(n * d);
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(rows[i].size()) != d)
      throw ValidationError(where + ": agent " + std::to_string(i + 1) + " needs " + std::to_string(d) + " coordinates");
    for (int c = 0; c < d; ++c) out(i * d + c) = rows[i][c];
  }
  return out;
}

inline std::vector<Edge> parse_edges(const std::string& raw, const std::string& where) {
  static const std::regex pair(R"(\(\s*(-?\d+)\s*,\s*(-?\d+)\s*\))");
  std::vector<Edge> out;
  for (std::sregex_iterator it(raw.begin(), raw.end(), pair), end; it != end; ++it)
    out.push_back({std::stoi((*it)[1].str()) - 1, std::stoi((*it)[2].str()) - 1});
  std::string leftovers = std::regex_replace(raw, pair, "");
  for (char c : leftovers)
    if (c != ',' && c != ' ' && c != '\t')
      throw ValidationError(where + ": edges must be written as (i,j) pairs, got '" + trim(raw) + "'");
  return out;
}

inline std::string format_matrix(const Mat& M) {
  const double c = M(0, 0);
  if ((M - c * Mat::Identity(M.rows(), M.cols())).cwiseAbs().maxCoeff() == 0.0)
    return format_double(c);
  std::string out = "[";
  for (Eigen::Index r = 0; r < M.rows(); ++r) {
    for (Eigen::Index col = 0; col < M.cols(); ++col) out += (col ? " " : "") + format_double(M(r, col));
    out += r + 1 < M.rows() ? "; " : "]";
  }
  return out;
}

inline std::string format_stacked(const Vec& v, int d) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size() / d; ++i) {
    if (i) out += "; ";
    for (int c = 0; c < d; ++c) out += (c ? " " : "") + format_double(v(i * d + c));
  }
  return out;
}

inline std::string format_edges(const std::vector<Edge>& edges) {
  std::string out;
  for (std::size_t k = 0; k < edges.size(); ++k) out += (k ? ", " : "") + edge_label(edges[k]);
  return out;
}

using Sections = std::map<std::string, std::map<std::string, std::string>>;

inline Sections read_sections(std::istream& in) {
  Sections out;
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      out[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos || section.empty())
      throw ValidationError("line " + std::to_string(lineno) + ": expected 'key = value' inside a [section]");
    out[section][trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Parsing / serialization
// ---------------------------------------------------------------------------

inline Scenario parse_scenario(std::istream& in) {
  using namespace detail;
  const Sections sec = read_sections(in);
  auto get = [&](const std::string& s, const std::string& k) -> std::optional<std::string> {
    auto si = sec.find(s);
    if (si == sec.end()) return std::nullopt;
    auto ki = si->second.find(k);
    if (ki == si->second.end()) return std::nullopt;
    return ki->second;
  };
  auto need = [&](const std::string& s, const std::string& k) {
    auto v = get(s, k);
    if (!v) throw ValidationError("missing required key '" + k + "' in [" + s + "]");
    return *v;
  };
  auto num = [&](const std::string& s, const std::string& k, double fallback) {
    auto v = get(s, k);
    return v ? parse_number(*v, s + "." + k) : fallback;
  };
  auto integer = [&](const std::string& s, const std::string& k, double fallback) {
    const double x = num(s, k, fallback);
    if (x != std::floor(x)) throw ValidationError(s + "." + k + " must be an integer");
    return static_cast<int>(x);
  };

  Scenario sc;
  sc.name = get("scenario", "name").value_or("unnamed");
  const std::string mode = need("scenario", "mode");
  if (mode == "centralized-observer") sc.mode = Mode::centralized_observer;
  else if (mode == "decentralized-observer") sc.mode = Mode::decentralized_observer;
  else if (mode == "observer-based-control") sc.mode = Mode::observer_based_control;
  else if (mode == "truth-feedback-control") sc.mode = Mode::truth_feedback_control;
  else throw ValidationError("unknown mode '" + mode + "'");

  sc.d = integer("scenario", "dimension", 3);
  sc.n = integer("scenario", "agents", 0);
  if (sc.n < 2) throw ValidationError("scenario.agents must be at least 2");
  if (sc.d < 2) throw ValidationError("scenario.dimension must be at least 2");
  sc.leader = integer("scenario", "leader", 1) - 1;
  sc.duration = num("scenario", "duration", 30.0);
  sc.dt = num("scenario", "dt", 1e-3);
  const double seed = num("scenario", "seed", 1);
  if (seed < 0 || seed != std::floor(seed)) throw ValidationError("scenario.seed must be a non-negative integer");
  sc.noise.seed = static_cast<std::uint64_t>(seed);

  sc.edges = parse_edges(need("graph", "edges"), "graph.edges");
  if (auto v = get("graph", "pe_edges")) sc.pe_edges = parse_edges(*v, "graph.pe_edges");
  if (auto v = get("graph", "ibr_edge_threshold")) sc.ibr_edge_threshold = static_cast<int>(parse_number(*v, "graph.ibr_edge_threshold"));

  const std::string kind = get("noise", "kind").value_or("none");
  if (kind == "none") sc.noise.kind = NoiseKind::none;
  else if (kind == "skew") sc.noise.kind = NoiseKind::skew;
  else if (kind == "rotation") sc.noise.kind = NoiseKind::rotation;
  else throw ValidationError("unknown noise kind '" + kind + "'");
  sc.noise.magnitude = num("noise", "magnitude", 0.02);
  sc.network_delay = integer("network", "delay", 0);

  const int N = sc.n * sc.d;
  auto mat = [&](const std::string& s, const std::string& k, int size, const std::string& fallback) {
    return parse_matrix(get(s, k).value_or(fallback), size, s + "." + k);
  };
  sc.central.kappa = num("centralized", "kappa", 10.0);
  sc.central.Q = mat("centralized", "Q", N, "10");
  sc.central.S = mat("centralized", "S", 2 * N, "0.01");
  sc.central.M0 = mat("centralized", "M0", 2 * N, "1");

  sc.edge.kappa = num("edge_observer", "kappa", 10.0);
  sc.edge.Q = mat("edge_observer", "Q", sc.d, "10");
  sc.edge.S = mat("edge_observer", "S", 2 * sc.d, "0.01");
  sc.edge.M0 = mat("edge_observer", "M0", 2 * sc.d, "100");

  sc.distributed.kappa_o1 = num("distributed", "kappa_o1", 10.0);
  sc.distributed.kappa_o2 = num("distributed", "kappa_o2", 5.0);
  const std::string form = get("distributed", "leader_gain").value_or("gained");
  if (form == "gained") sc.distributed.leader_form = LeaderGainForm::gained;
  else if (form == "unit") sc.distributed.leader_form = LeaderGainForm::unit;
  else throw ValidationError("distributed.leader_gain must be 'gained' or 'unit'");

  const std::string fb = get("controller", "feedback").value_or("decentralized");
  if (fb == "decentralized") sc.feedback = Feedback::decentralized;
  else if (fb == "centralized") sc.feedback = Feedback::centralized;
  else if (fb == "truth") sc.feedback = Feedback::truth;
  else throw ValidationError("controller.feedback must be decentralized, centralized or truth");
  if (sc.mode == Mode::truth_feedback_control) sc.feedback = Feedback::truth;
  auto per_agent = [&](const std::string& k, double fallback) {
    auto v = get("controller", k);
    if (!v) return std::vector<double>(sc.n, fallback);
    auto xs = parse_numbers(*v, "controller." + k);
    if (xs.size() == 1) return std::vector<double>(sc.n, xs[0]);
    if (static_cast<int>(xs.size()) != sc.n)
      throw ValidationError("controller." + k + " needs 1 or " + std::to_string(sc.n) + " values");
    return xs;
  };
  sc.controller.kappa_p = per_agent("kappa_p", 5.0);
  sc.controller.kappa_v = per_agent("kappa_v", 2.0);

  const std::string ref = get("reference", "kind").value_or("paper");
  if (ref == "paper") sc.reference = ReferenceKind::paper;
  else if (ref == "fixed") sc.reference = ReferenceKind::fixed;
  else if (ref == "circular") sc.reference = ReferenceKind::circular;
  else throw ValidationError("unknown reference kind '" + ref + "'");
  if (sc.reference != ReferenceKind::paper)
    sc.reference_positions = parse_stacked(need("reference", "positions"), sc.n, sc.d, "reference.positions");
  sc.reference_radius = num("reference", "radius", 1.0);
  sc.reference_omega = num("reference", "omega", 1.0);

  if (auto v = get("initial", "p")) sc.initial_p = parse_stacked(*v, sc.n, sc.d, "initial.p");
  if (auto v = get("initial", "v")) sc.initial_v = parse_stacked(*v, sc.n, sc.d, "initial.v");
  sc.initial_p_hat = get("initial", "p_hat") ? parse_stacked(*get("initial", "p_hat"), sc.n, sc.d, "initial.p_hat")
                                             : Vec(Vec::Zero(N));
  sc.initial_v_hat = get("initial", "v_hat") ? parse_stacked(*get("initial", "v_hat"), sc.n, sc.d, "initial.v_hat")
                                             : Vec(Vec::Zero(N));

  sc.pe_window = num("analysis", "pe_window", 1.0);
  sc.pe_threshold = num("analysis", "pe_threshold", kDefaultPeThreshold);
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open scenario file '" + path + "'");
  return parse_scenario(in);
}

inline std::string write_scenario(const Scenario& sc) {
  using namespace detail;
  std::ostringstream o;
  o << "[scenario]\n"
    << "name = " << sc.name << "\n"
    << "mode = " << to_string(sc.mode) << "\n"
    << "dimension = " << sc.d << "\n"
    << "agents = " << sc.n << "\n"
    << "leader = " << sc.leader + 1 << "\n"
    << "duration = " << format_double(sc.duration) << "\n"
    << "dt = " << format_double(sc.dt) << "\n"
    << "seed = " << sc.noise.seed << "\n\n";
  o << "[graph]\n"
    << "edges = " << format_edges(sc.edges) << "\n";
  if (!sc.pe_edges.empty()) o << "pe_edges = " << format_edges(sc.pe_edges) << "\n";
  if (sc.ibr_edge_threshold) o << "ibr_edge_threshold = " << *sc.ibr_edge_threshold << "\n";
  o << "\n[noise]\n"
    << "kind = " << to_string(sc.noise.kind) << "\n"
    << "magnitude = " << format_double(sc.noise.magnitude) << "\n\n";
  o << "[network]\ndelay = " << sc.network_delay << "\n\n";
  o << "[centralized]\n"
    << "kappa = " << format_double(sc.central.kappa) << "\n"
    << "M0 = " << format_matrix(sc.central.M0) << "\n"
    << "Q = " << format_matrix(sc.central.Q) << "\n"
    << "S = " << format_matrix(sc.central.S) << "\n\n";
  o << "[edge_observer]\n"
    << "kappa = " << format_double(sc.edge.kappa) << "\n"
    << "M0 = " << format_matrix(sc.edge.M0) << "\n"
    << "Q = " << format_matrix(sc.edge.Q) << "\n"
    << "S = " << format_matrix(sc.edge.S) << "\n\n";
  o << "[distributed]\n"
    << "kappa_o1 = " << format_double(sc.distributed.kappa_o1) << "\n"
    << "kappa_o2 = " << format_double(sc.distributed.kappa_o2) << "\n"
    << "leader_gain = " << to_string(sc.distributed.leader_form) << "\n\n";
  auto list = [](const std::vector<double>& xs) {
    std::string s;
    for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? " " : "") + format_double(xs[i]);
    return s;
  };
  o << "[controller]\n"
    << "feedback = " << to_string(sc.feedback) << "\n"
    << "kappa_p = " << list(sc.controller.kappa_p) << "\n"
    << "kappa_v = " << list(sc.controller.kappa_v) << "\n\n";
  o << "[reference]\nkind = " << to_string(sc.reference) << "\n";
  if (sc.reference != ReferenceKind::paper) o << "positions = " << format_stacked(sc.reference_positions, sc.d) << "\n";
  if (sc.reference == ReferenceKind::circular)
    o << "radius = " << format_double(sc.reference_radius) << "\n"
      << "omega = " << format_double(sc.reference_omega) << "\n";
  o << "\n[initial]\n";
  if (sc.initial_p) o << "p = " << format_stacked(*sc.initial_p, sc.d) << "\n";
  if (sc.initial_v) o << "v = " << format_stacked(*sc.initial_v, sc.d) << "\n";
  o << "p_hat = " << format_stacked(sc.initial_p_hat, sc.d) << "\n"
    << "v_hat = " << format_stacked(sc.initial_v_hat, sc.d) << "\n\n";
  o << "[analysis]\n"
    << "pe_window = " << format_double(sc.pe_window) << "\n"
    << "pe_threshold = " << format_double(sc.pe_threshold) << "\n";
  return o.str();
}

// ---------------------------------------------------------------------------
// Built-in experiments: the 4-agent cycle with an oscillating leader.
// ---------------------------------------------------------------------------

inline Vec stacked3(std::initializer_list<std::array<double, 3>> rows) {
  Vec out(static_cast<Eigen::Index>(rows.size()) * 3);
  Eigen::Index i = 0;
  for (const auto& r : rows)
    for (double x : r) out(i++) = x;
  return out;
}

inline Scenario paper_base() {
  Scenario sc;
  sc.d = 3;
  sc.n = 4;
  sc.leader = 0;
  sc.edges = {{0, 1}, {1, 2}, {2, 3}, {0, 3}};
  sc.pe_edges = {{0, 1}, {0, 3}};
  sc.duration = 30.0;
  sc.dt = 1e-3;
  sc.noise = {NoiseKind::skew, 0.02, 1};
  sc.central = CentralizedGains::scaled_identity(4, 3, 10.0, 10.0, 0.01, 1.0);
  sc.edge = EdgeGains::scaled_identity(3, 10.0, 10.0, 0.01, 100.0);
  sc.distributed = {10.0, 5.0, LeaderGainForm::gained};
  sc.controller = ControllerGains::uniform(4, 5.0, 2.0);
  sc.reference = ReferenceKind::paper;
  sc.initial_p_hat = stacked3({{0, 1, 0}, {2, 0, 1}, {0, -1, 1}, {0, 0, 0}});
  sc.initial_v_hat = stacked3({{0, 0, 0}, {1, 0, 0}, {1, -1, 0}, {0, 1, 0}});
  sc.pe_window = 1.0;  // one leader oscillation period
  return sc;
}

inline std::vector<std::string> builtin_names() {
  return {"paper-centralized", "paper-decentralized", "paper-control"};
}

inline Scenario builtin_scenario(const std::string& name) {
  Scenario sc = paper_base();
  sc.name = name;
  if (name == "paper-centralized") {
    sc.mode = Mode::centralized_observer;
  } else if (name == "paper-decentralized") {
    sc.mode = Mode::decentralized_observer;
  } else if (name == "paper-control") {
    sc.mode = Mode::observer_based_control;
    sc.feedback = Feedback::decentralized;
    sc.initial_p = stacked3({{1, 0, 0}, {-1, 1, 1}, {0, 1, 0}, {0, 0, 0}});
    sc.initial_v = stacked3({{0, 0, 1}, {1, -1, -1}, {1, 0, 1}, {0, 0, 0}});
  } else {
    std::string known;
    for (const auto& n : builtin_names()) known += " " + n;
    throw ValidationError("unknown built-in scenario '" + name + "' (known:" + known + ")");
  }
  return sc;
}

inline std::vector<Scenario> builtin_scenarios() {
  std::vector<Scenario> out;
  for (const auto& n : builtin_names()) out.push_back(builtin_scenario(n));
  return out;
}

}  // namespace bform

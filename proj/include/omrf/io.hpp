#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "omrf/estimate.hpp"
#include "omrf/metrics.hpp"
#include "omrf/model.hpp"
#include "omrf/rescale.hpp"
#include "omrf/samplers.hpp"

namespace omrf {

using json = nlohmann::json;

// Writes via a temp file plus rename, so readers never see partial files.
inline void atomic_write_text(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path dir = path.parent_path();
  if (!dir.empty()) std::filesystem::create_directories(dir);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot open " + tmp.string() + " for writing");
    out << content;
    if (!out.good()) throw ValidationError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    std::size_t start = cell.find_first_not_of(' ');
    out.push_back(start == std::string::npos ? "" : cell.substr(start));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

inline bool is_integer(const std::string& s) {
  if (s.empty()) return false;
  std::size_t i = (s[0] == '-' || s[0] == '+') ? 1 : 0;
  if (i == s.size()) return false;
  for (; i < s.size(); ++i) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  }
  return true;
}

}  // namespace detail

// Integer CSV with a single header line. Errors name the offending cell.
inline Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dataset " + path.string());
  std::string line;
  std::vector<std::vector<int>> rows;
  int cols = -1;
  int lineno = 0;
  bool header_checked = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> cells = detail::split_csv_line(line);
    if (!header_checked) {
      header_checked = true;
      cols = static_cast<int>(cells.size());
      if (!detail::is_integer(cells[0])) continue;  // header line
    }
    if (static_cast<int>(cells.size()) != cols) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(cols) + " cells, found " +
                            std::to_string(cells.size()));
    }
    std::vector<int> row(cols);
    for (int c = 0; c < cols; ++c) {
      if (!detail::is_integer(cells[c])) {
        throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": cell " +
                              std::to_string(c + 1) + " ('" + cells[c] + "') is not an integer");
      }
      row[c] = std::stoi(cells[c]);
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ValidationError(path.string() + ": no data rows");
  Dataset data;
  data.values.resize(static_cast<int>(rows.size()), cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (int c = 0; c < cols; ++c) data.values(static_cast<int>(r), c) = rows[r][c];
  }
  return data;
}

inline void write_dataset_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ostringstream out;
  for (int c = 0; c < data.p(); ++c) out << (c ? "," : "") << "x" << (c + 1);
  out << "\n";
  for (int r = 0; r < data.n(); ++r) {
    for (int c = 0; c < data.p(); ++c) out << (c ? "," : "") << data.values(r, c);
    out << "\n";
  }
  atomic_write_text(path, out.str());
}

// Edge list CSV with header "from,to"; vertex indices are 0-based.
inline GraphStructure read_structure_csv(const std::filesystem::path& path, int p) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open structure " + path.string());
  GraphStructure g;
  g.p = p;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> cells = detail::split_csv_line(line);
    if (lineno == 1 && !detail::is_integer(cells[0])) continue;
    if (cells.size() != 2 || !detail::is_integer(cells[0]) || !detail::is_integer(cells[1])) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) +
                            ": expected 'from,to' integer pair");
    }
    g.add_edge(std::stoi(cells[0]), std::stoi(cells[1]));
  }
  return g;
}

inline void write_structure_csv(const GraphStructure& g, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "from,to\n";
  for (auto [i, j] : g.edges) out << i << "," << j << "\n";
  atomic_write_text(path, out.str());
}

inline json vector_to_json(const Vector& v) {
  json arr = json::array();
  for (int i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

inline Vector vector_from_json(const json& arr) {
  Vector v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v[static_cast<int>(i)] = arr[i].get<double>();
  return v;
}

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const json& rows) {
  if (rows.empty()) return Matrix();
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      m(static_cast<int>(r), static_cast<int>(c)) = rows[r][c].get<double>();
    }
  }
  return m;
}

inline json to_json(const RescalingMatrix& r) {
  return json{{"variant", to_string(r.variant)},
              {"identity", r.identity},
              {"theta_star", vector_to_json(r.theta_star)},
              {"L", matrix_to_json(r.L)},
              {"Gamma", matrix_to_json(r.Gamma)},
              {"A", matrix_to_json(r.A)},
              {"A_inv", matrix_to_json(r.A_inv)},
              {"warnings", r.warnings}};
}

inline RescalingMatrix rescaling_from_json(const json& j) {
  RescalingMatrix r;
  std::string variant = j.at("variant").get<std::string>();
  if (variant == "ghw") r.variant = RescalingVariant::GHW;
  else if (variant == "rm") r.variant = RescalingVariant::RM;
  else if (variant == "mch") r.variant = RescalingVariant::MCH;
  else throw ValidationError("unknown rescaling variant '" + variant + "'");
  r.identity = j.at("identity").get<bool>();
  r.theta_star = vector_from_json(j.at("theta_star"));
  r.L = matrix_from_json(j.at("L"));
  r.Gamma = matrix_from_json(j.at("Gamma"));
  r.A = matrix_from_json(j.at("A"));
  r.A_inv = matrix_from_json(j.at("A_inv"));
  if (j.contains("warnings")) r.warnings = j.at("warnings").get<std::vector<std::string>>();
  return r;
}

inline json to_json(const EstimateResult& e) {
  return json{{"theta_star", vector_to_json(e.theta_star)},
              {"converged", e.converged},
              {"iterations", e.iterations},
              {"final_gradient_norm", e.final_gradient_norm},
              {"message", e.message},
              {"warnings", e.warnings}};
}

// Chain files come in pairs: a draws CSV (reported scale, one column per
// parameter, plus acceptance and step-size traces) and a JSON sidecar with
// everything scalar. read_chain_csv rebuilds a Chain good enough for
// calibration and metrics; theta/beta duality is recorded as "scale".
inline void write_chain_csv(const Chain& chain, const std::filesystem::path& csv_path,
                            const std::filesystem::path& sidecar_path,
                            const std::vector<std::string>& param_names) {
  const Matrix& draws = chain.reported();
  if (static_cast<int>(param_names.size()) != draws.cols()) {
    throw ValidationError("write_chain_csv: parameter name count does not match draws");
  }
  std::ostringstream out;
  out.precision(17);
  for (std::size_t c = 0; c < param_names.size(); ++c) out << (c ? "," : "") << param_names[c];
  out << ",accepted,sigma2\n";
  for (int s = 0; s < draws.rows(); ++s) {
    for (int c = 0; c < draws.cols(); ++c) out << (c ? "," : "") << draws(s, c);
    out << "," << int(chain.accept_trace[s]) << "," << chain.sigma2_trace[s] << "\n";
  }
  atomic_write_text(csv_path, out.str());

  json side{{"method", chain.method},
            {"burn_in", chain.burn_in},
            {"iterations", chain.iterations()},
            {"acceptance_rate", chain.acceptance_rate},
            {"wall_time_seconds", chain.wall_time_seconds},
            {"rescaling_updates", chain.rescaling_updates},
            {"scale", chain.has_beta() ? "beta" : "theta"},
            {"warnings", chain.warnings}};
  if (chain.empirical_shift.size() > 0) {
    side["empirical_shift"] = vector_to_json(chain.empirical_shift);
  }
  if (chain.rescaling) side["rescaling"] = to_json(*chain.rescaling);
  atomic_write_text(sidecar_path, side.dump(2) + "\n");
}

inline Chain read_chain_csv(const std::filesystem::path& csv_path,
                            const std::filesystem::path& sidecar_path) {
  json side = json::parse(read_text(sidecar_path));
  std::ifstream in(csv_path);
  if (!in) throw ValidationError("cannot open chain " + csv_path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(csv_path.string() + ": empty file");
  std::vector<std::string> header = detail::split_csv_line(line);
  if (header.size() < 3 || header[header.size() - 2] != "accepted" ||
      header.back() != "sigma2") {
    throw ValidationError(csv_path.string() + ": expected trailing accepted,sigma2 columns");
  }
  const int d = static_cast<int>(header.size()) - 2;
  std::vector<std::vector<double>> rows;
  std::vector<std::uint8_t> accepted;
  std::vector<double> sigma2;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> cells = detail::split_csv_line(line);
    if (static_cast<int>(cells.size()) != d + 2) {
      throw ValidationError(csv_path.string() + ":" + std::to_string(lineno) +
                            ": wrong cell count");
    }
    std::vector<double> row(d);
    for (int c = 0; c < d; ++c) row[c] = std::stod(cells[c]);
    rows.push_back(std::move(row));
    accepted.push_back(static_cast<std::uint8_t>(std::stoi(cells[d])));
    sigma2.push_back(std::stod(cells[d + 1]));
  }
  Chain chain;
  chain.method = side.at("method").get<std::string>();
  chain.burn_in = side.at("burn_in").get<int>();
  chain.acceptance_rate = side.at("acceptance_rate").get<double>();
  chain.wall_time_seconds = side.at("wall_time_seconds").get<double>();
  if (side.contains("rescaling_updates")) {
    chain.rescaling_updates = side.at("rescaling_updates").get<int>();
  }
  if (side.contains("warnings")) {
    chain.warnings = side.at("warnings").get<std::vector<std::string>>();
  }
  if (side.contains("empirical_shift")) {
    chain.empirical_shift = vector_from_json(side.at("empirical_shift"));
  }
  if (side.contains("rescaling")) chain.rescaling = rescaling_from_json(side.at("rescaling"));
  chain.draws.resize(static_cast<int>(rows.size()), d);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (int c = 0; c < d; ++c) chain.draws(static_cast<int>(r), c) = rows[r][c];
  }
  chain.accept_trace = std::move(accepted);
  chain.sigma2_trace = Eigen::Map<Vector>(sigma2.data(), static_cast<int>(sigma2.size()));
  // The CSV holds the reported scale. For a rescaled chain that is beta, so
  // move it there and rebuild the theta trace through the stored map.
  if (side.value("scale", "theta") == std::string("beta")) {
    chain.beta_draws = chain.draws;
    if (chain.rescaling) {
      for (int s = 0; s < chain.iterations(); ++s) {
        chain.draws.row(s) =
            chain.rescaling->to_theta(chain.beta_draws.row(s).transpose()).transpose();
      }
    }
  }
  if (chain.burn_in < 0 || chain.burn_in >= chain.iterations()) {
    throw ValidationError(csv_path.string() + ": burn_in out of range for the stored draws");
  }
  return chain;
}

inline json to_json(const Condition& c) {
  return json{{"n", c.N}, {"p", c.P}, {"structure", c.structure}, {"label", c.label}};
}

inline Condition condition_from_json(const json& j) {
  Condition c;
  c.N = j.at("n").get<int>();
  c.P = j.at("p").get<int>();
  c.structure = j.at("structure").get<std::string>();
  c.label = j.at("label").get<std::string>();
  return c;
}

inline json to_json(const MetricsReport& report) {
  json methods = json::array();
  for (const MethodReport& mr : report.methods) {
    json params = json::array();
    for (const ParamMetrics& pm : mr.params) {
      params.push_back(json{{"name", pm.name},
                            {"overlap", pm.overlap},
                            {"log_bf", pm.log_bf},
                            {"bf_floored", pm.bf_floored},
                            {"sd_ratio", pm.sd_ratio},
                            {"ess", pm.ess}});
    }
    methods.push_back(json{{"method", mr.method},
                           {"wall_time_seconds", mr.wall_time_seconds},
                           {"acceptance_rate", mr.acceptance_rate},
                           {"params", std::move(params)}});
  }
  return json{{"condition", to_json(report.condition)},
              {"methods", std::move(methods)},
              {"notes", report.notes}};
}

inline MetricsReport metrics_report_from_json(const json& j) {
  MetricsReport report;
  report.condition = condition_from_json(j.at("condition"));
  for (const json& mj : j.at("methods")) {
    MethodReport mr;
    mr.method = mj.at("method").get<std::string>();
    mr.wall_time_seconds = mj.at("wall_time_seconds").get<double>();
    mr.acceptance_rate = mj.at("acceptance_rate").get<double>();
    for (const json& pj : mj.at("params")) {
      ParamMetrics pm;
      pm.name = pj.at("name").get<std::string>();
      pm.overlap = pj.at("overlap").get<double>();
      pm.log_bf = pj.at("log_bf").get<double>();
      pm.bf_floored = pj.at("bf_floored").get<bool>();
      pm.sd_ratio = pj.at("sd_ratio").get<double>();
      pm.ess = pj.at("ess").get<double>();
      mr.params.push_back(std::move(pm));
    }
    report.methods.push_back(std::move(mr));
  }
  report.notes = j.at("notes").get<std::vector<std::string>>();
  return report;
}

// Long-format CSV of a metrics report, one row per (method, parameter).
inline void write_metrics_csv(const MetricsReport& report, const std::filesystem::path& path) {
  std::ostringstream out;
  out.precision(10);
  out << "structure,n,p,method,parameter,overlap,log_bf,bf_floored,sd_ratio,ess,"
         "wall_time_seconds,acceptance_rate\n";
  for (const MethodReport& mr : report.methods) {
    for (const ParamMetrics& pm : mr.params) {
      out << report.condition.structure << "," << report.condition.N << ","
          << report.condition.P << "," << mr.method << "," << pm.name << "," << pm.overlap << ","
          << pm.log_bf << "," << (pm.bf_floored ? 1 : 0) << "," << pm.sd_ratio << "," << pm.ess
          << "," << mr.wall_time_seconds << "," << mr.acceptance_rate << "\n";
    }
  }
  atomic_write_text(path, out.str());
}

}  // namespace omrf

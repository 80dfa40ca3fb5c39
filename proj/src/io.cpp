#include "lca/io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lca::io {
namespace {

using nlohmann::json;

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool have = false;
  for (char c : line) {
    if (c == ',' ) {
      out.push_back(cur);
      cur.clear();
      have = false;
    } else if (c == ' ' || c == '\t' || c == '\r') {
      if (have) {
        out.push_back(cur);
        cur.clear();
        have = false;
      }
    } else {
      cur.push_back(c);
      have = true;
    }
  }
  if (have || !cur.empty()) out.push_back(cur);
  // Drop empty tokens left by ", " style separators.
  std::vector<std::string> tokens;
  for (auto& t : out) {
    if (!t.empty()) tokens.push_back(std::move(t));
  }
  return tokens;
}

bool parse_number(const std::string& token, double& value) {
  const char* begin = token.data();
  const char* end = begin + token.size();
  if (begin != end && *begin == '+') ++begin;
  const auto res = std::from_chars(begin, end, value);
  return res.ec == std::errc() && res.ptr == end;
}

json matrix_to_json(const Matrix& m) {
  std::vector<double> flat;
  flat.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) flat.push_back(m(r, c));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", flat}};
}

Matrix matrix_from_json(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto flat = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(flat.size()) != rows * cols) {
    throw DataError("model file: matrix data has the wrong length");
  }
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = flat[static_cast<std::size_t>(r * cols + c)];
  }
  return m;
}

json vector_to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from_json(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

std::string structure_name(CovarianceStructure s) {
  switch (s) {
    case CovarianceStructure::full:
      return "full";
    case CovarianceStructure::diagonal:
      return "diagonal";
    case CovarianceStructure::isotropic:
      return "isotropic";
  }
  return "full";
}

CovarianceStructure structure_from_name(const std::string& s) {
  if (s == "full") return CovarianceStructure::full;
  if (s == "diagonal") return CovarianceStructure::diagonal;
  if (s == "isotropic") return CovarianceStructure::isotropic;
  throw DataError("unknown covariance structure '" + s + "'");
}

json optional_to_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

json header(const char* kind) {
  return json{{"format", "lca-model"}, {"version", kModelFormatVersion}, {"kind", kind}};
}

}  // namespace

Table parse_matrix(const std::string& text, const std::string& source) {
  Table table;
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  bool first_content = true;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_fields(line);
    if (fields.empty() || fields.front().front() == '#') continue;
    std::vector<double> row(fields.size());
    bool numeric = true;
    for (std::size_t f = 0; f < fields.size(); ++f) {
      if (!parse_number(fields[f], row[f])) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (first_content) {
        table.header = fields;
        width = fields.size();
        first_content = false;
        continue;
      }
      throw DataError(source + ":" + std::to_string(line_no) + ": malformed row");
    }
    for (double v : row) {
      if (!std::isfinite(v)) {
        throw DataError(source + ":" + std::to_string(line_no) + ": non-finite value");
      }
    }
    if (width == 0) width = row.size();
    if (row.size() != width) {
      throw DataError(source + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(width) + " values, found " + std::to_string(row.size()));
    }
    first_content = false;
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(source + ": no data rows");
  table.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return table;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw std::runtime_error("failed writing '" + path + "'");
}

Table read_matrix(const std::string& path) { return parse_matrix(read_text(path), path); }

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string format_matrix(const Matrix& values, const std::vector<std::string>& header) {
  std::string out;
  if (!header.empty() && static_cast<Eigen::Index>(header.size()) != values.cols()) {
    throw std::invalid_argument("header width does not match the matrix");
  }
  for (Eigen::Index c = 0; c < values.cols(); ++c) {
    if (c > 0) out += ',';
    out += header.empty() ? "x" + std::to_string(c) : header[static_cast<std::size_t>(c)];
  }
  out += '\n';
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      if (c > 0) out += ',';
      out += format_double(values(r, c));
    }
    out += '\n';
  }
  return out;
}

void write_matrix(const std::string& path, const Matrix& values,
                  const std::vector<std::string>& header) {
  write_text(path, format_matrix(values, header));
}

std::vector<int> read_labels(const std::string& path) {
  const Table t = read_matrix(path);
  if (t.values.cols() != 1) throw DataError(path + ": label file must have one column");
  std::vector<int> labels(static_cast<std::size_t>(t.values.rows()));
  for (Eigen::Index r = 0; r < t.values.rows(); ++r) {
    const double v = t.values(r, 0);
    if (v != std::floor(v) || v < 0) {
      throw DataError(path + ": labels must be nonnegative integers");
    }
    labels[static_cast<std::size_t>(r)] = static_cast<int>(v);
  }
  return labels;
}

void write_labels(const std::string& path, const std::vector<int>& labels) {
  std::string out = "label\n";
  for (int l : labels) out += std::to_string(l) + '\n';
  write_text(path, out);
}

json to_json(const FitConfig& cfg) {
  return json{{"max_iter", cfg.max_iter},
              {"rel_tol", cfg.rel_tol},
              {"reg_nu", optional_to_json(cfg.reg_nu)},
              {"reg_nu_global", optional_to_json(cfg.reg_nu_global)},
              {"seed", cfg.seed},
              {"structure", structure_name(cfg.structure)},
              {"probe_iters", cfg.probe_iters}};
}

FitConfig fit_config_from_json(const json& j) {
  FitConfig cfg;
  cfg.max_iter = j.at("max_iter").get<int>();
  cfg.rel_tol = j.at("rel_tol").get<double>();
  cfg.reg_nu = optional_from_json(j.at("reg_nu"));
  cfg.reg_nu_global = optional_from_json(j.at("reg_nu_global"));
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.structure = structure_from_name(j.at("structure").get<std::string>());
  cfg.probe_iters = j.at("probe_iters").get<int>();
  return cfg;
}

json to_json(const stochastic::StochasticConfig& cfg) {
  return json{{"gamma", cfg.gamma},       {"batch_size", cfg.batch_size},
              {"neigh_size", cfg.neigh_size}, {"seed", cfg.seed},
              {"epochs", cfg.epochs},     {"track_objective", cfg.track_objective}};
}

stochastic::StochasticConfig stochastic_config_from_json(const json& j) {
  stochastic::StochasticConfig cfg;
  cfg.gamma = j.at("gamma").get<double>();
  cfg.batch_size = j.at("batch_size").get<Eigen::Index>();
  cfg.neigh_size = j.at("neigh_size").get<Eigen::Index>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.epochs = j.at("epochs").get<int>();
  cfg.track_objective = j.at("track_objective").get<bool>();
  return cfg;
}

json to_json(const MetricModel& model) {
  json j = header("lca");
  j["config"] = to_json(model.config);
  j["reg_nu"] = model.reg_nu;
  j["iterations"] = model.iterations;
  j["converged"] = model.converged;
  j["loo_nll"] = model.loo_nll;
  j["loo_nll_trace"] = model.loo_nll_trace;
  j["objective_trace"] = model.objective_trace;
  j["sigma"] = matrix_to_json(model.sigma);
  j["precision_factor"] = matrix_to_json(model.precision_factor);
  return j;
}

json to_json(const gauss_parzen::GaussParzenModel& model) {
  json j = header("gauss_parzen");
  j["config"] = to_json(model.config);
  j["reg_nu"] = model.reg_nu;
  j["reg_nu_global"] = model.reg_nu_global;
  j["iterations"] = model.iterations;
  j["converged"] = model.converged;
  j["loo_nll"] = model.loo_nll;
  j["d_gauss"] = model.d_gauss();
  j["d_parzen"] = model.d_parzen();
  j["bound_trace"] = model.bound_trace;
  j["mu"] = vector_to_json(model.mu);
  j["eigvals"] = vector_to_json(model.eigvals);
  j["b_g"] = matrix_to_json(model.b_g);
  j["b_l"] = matrix_to_json(model.b_l);
  return j;
}

AnyModel model_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "lca-model") throw DataError("not an lca model file");
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion) {
      throw DataError("unsupported model format version " + std::to_string(version));
    }
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "lca") {
      MetricModel m;
      m.config = fit_config_from_json(j.at("config"));
      m.reg_nu = j.at("reg_nu").get<double>();
      m.iterations = j.at("iterations").get<int>();
      m.converged = j.at("converged").get<bool>();
      m.loo_nll = j.at("loo_nll").get<double>();
      m.loo_nll_trace = j.at("loo_nll_trace").get<std::vector<double>>();
      m.objective_trace = j.at("objective_trace").get<std::vector<double>>();
      m.sigma = matrix_from_json(j.at("sigma"));
      m.precision_factor = matrix_from_json(j.at("precision_factor"));
      return m;
    }
    if (kind == "gauss_parzen") {
      gauss_parzen::GaussParzenModel m;
      m.config = fit_config_from_json(j.at("config"));
      m.reg_nu = j.at("reg_nu").get<double>();
      m.reg_nu_global = j.at("reg_nu_global").get<double>();
      m.iterations = j.at("iterations").get<int>();
      m.converged = j.at("converged").get<bool>();
      m.loo_nll = j.at("loo_nll").get<double>();
      m.bound_trace = j.at("bound_trace").get<std::vector<double>>();
      m.mu = vector_from_json(j.at("mu"));
      m.eigvals = vector_from_json(j.at("eigvals"));
      m.b_g = matrix_from_json(j.at("b_g"));
      m.b_l = matrix_from_json(j.at("b_l"));
      if (m.d_gauss() != j.at("d_gauss").get<Eigen::Index>() ||
          m.d_parzen() != j.at("d_parzen").get<Eigen::Index>()) {
        throw DataError("model file: d_gauss / d_parzen disagree with the stored bases");
      }
      return m;
    }
    throw DataError("unknown model kind '" + kind + "'");
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed model file: ") + e.what());
  }
}

std::string serialize(const MetricModel& model) { return to_json(model).dump(1) + "\n"; }

std::string serialize(const gauss_parzen::GaussParzenModel& model) {
  return to_json(model).dump(1) + "\n";
}

AnyModel deserialize(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("model file is not valid JSON: ") + e.what());
  }
  return model_from_json(j);
}

void save_model(const std::string& path, const AnyModel& model) {
  std::visit([&](const auto& m) { write_text(path, serialize(m)); }, model);
}

AnyModel load_model(const std::string& path) { return deserialize(read_text(path)); }

}  // namespace lca::io

#ifndef LCA_IO_HPP
#define LCA_IO_HPP

#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "lca/gauss_parzen.hpp"
#include "lca/lca.hpp"
#include "lca/stochastic.hpp"

/**
 * @file io.hpp
 *
 * Text formats. Data files are CSV with an optional header row; commas or
 * whitespace separate values. Numbers are written with 17 significant digits
 * so every finite double survives a round trip. Models are JSON documents
 * tagged with a format name and version.
 */
namespace lca::io {

inline constexpr int kModelFormatVersion = 1;

struct Table {
  std::vector<std::string> header;
  Matrix values;
};

/// Throws DataError naming the 1-based line of any malformed or non-finite
/// row, or rows of inconsistent width.
Table read_matrix(const std::string& path);
Table parse_matrix(const std::string& text, const std::string& source = "<string>");

/// Writes a header row (default x0, x1, ...) and one row per point.
void write_matrix(const std::string& path, const Matrix& values,
                  const std::vector<std::string>& header = {});
std::string format_matrix(const Matrix& values, const std::vector<std::string>& header = {});

std::vector<int> read_labels(const std::string& path);
void write_labels(const std::string& path, const std::vector<int>& labels);

/// Shortest "%.17g" rendering.
std::string format_double(double v);

/// Writes text, throwing std::runtime_error when the file cannot be opened.
void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

nlohmann::json to_json(const FitConfig& cfg);
FitConfig fit_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const stochastic::StochasticConfig& cfg);
stochastic::StochasticConfig stochastic_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const MetricModel& model);
nlohmann::json to_json(const gauss_parzen::GaussParzenModel& model);

using AnyModel = std::variant<MetricModel, gauss_parzen::GaussParzenModel>;

/// Throws DataError on unknown format tags, versions or missing fields.
AnyModel model_from_json(const nlohmann::json& j);

std::string serialize(const MetricModel& model);
std::string serialize(const gauss_parzen::GaussParzenModel& model);
AnyModel deserialize(const std::string& text);

void save_model(const std::string& path, const AnyModel& model);
AnyModel load_model(const std::string& path);

}  // namespace lca::io

#endif  // LCA_IO_HPP

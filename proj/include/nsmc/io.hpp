#pragma once

// Files: datasets as `t,d,y[,x]` CSV plus a `<name>.meta.json` sidecar, and filter
// output as `t,stat,component,value` CSV. Numbers are written in shortest round-trip
// form so a dataset read back is bit-identical to the one written.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "nsmc/errors.hpp"
#include "nsmc/model.hpp"
#include "nsmc/smc.hpp"

namespace nsmc {

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& where) {
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw InvalidParameter(where + ": cannot parse number '" + std::string(s) + "'");
  return v;
}

// Model parameters recorded next to a dataset.
struct DatasetMeta {
  std::string model_kind = "stssm";  // stssm | independent
  std::size_t n_x = 0;
  std::size_t T = 0;
  double a_coef = 0.5;
  double tau = 1.0;
  double lambda = 0.0;
  double obs_var = 1.0;
  std::uint64_t seed = 0;
  // Independent model only.
  double init_mean = 0.0;
  double init_var = 1.0;

  bool operator==(const DatasetMeta&) const = default;
};

inline void to_json(nlohmann::json& j, const DatasetMeta& m) {
  j = nlohmann::json{{"model_kind", m.model_kind}, {"n_x", m.n_x}, {"T", m.T},         {"a_coef", m.a_coef},
                     {"tau", m.tau},               {"lambda", m.lambda}, {"obs_var", m.obs_var}, {"seed", m.seed}};
  if (m.model_kind == "independent") {
    j["init_mean"] = m.init_mean;
    j["init_var"] = m.init_var;
  }
}

inline void from_json(const nlohmann::json& j, DatasetMeta& m) {
  j.at("model_kind").get_to(m.model_kind);
  j.at("n_x").get_to(m.n_x);
  j.at("T").get_to(m.T);
  j.at("a_coef").get_to(m.a_coef);
  j.at("tau").get_to(m.tau);
  j.at("lambda").get_to(m.lambda);
  j.at("obs_var").get_to(m.obs_var);
  j.at("seed").get_to(m.seed);
  m.init_mean = j.value("init_mean", 0.0);
  m.init_var = j.value("init_var", 1.0);
}

inline std::filesystem::path meta_path_for(const std::filesystem::path& csv) {
  auto p = csv;
  p.replace_extension(".meta.json");
  return p;
}

inline void write_dataset(const std::filesystem::path& csv, const Dataset& data, const DatasetMeta& meta) {
  data.validate();
  if (csv.has_parent_path()) std::filesystem::create_directories(csv.parent_path());
  std::ofstream os(csv);
  if (!os) throw Error("cannot write " + csv.string());
  os << (data.latent ? "t,d,y,x\n" : "t,d,y\n");
  for (std::size_t t = 1; t <= data.T; ++t)
    for (std::size_t d = 0; d < data.n_x; ++d) {
      os << t << ',' << d + 1 << ',' << format_double(data.y(t)[d]);
      if (data.latent) os << ',' << format_double(data.x(t)[d]);
      os << '\n';
    }
  std::ofstream ms(meta_path_for(csv));
  if (!ms) throw Error("cannot write " + meta_path_for(csv).string());
  ms << nlohmann::json(meta).dump(2) << '\n';
}

struct LoadedDataset {
  Dataset data;
  DatasetMeta meta;
};

inline LoadedDataset read_dataset(const std::filesystem::path& csv) {
  std::ifstream ms(meta_path_for(csv));
  if (!ms) throw InvalidParameter("missing dataset sidecar " + meta_path_for(csv).string());
  LoadedDataset out;
  try {
    out.meta = nlohmann::json::parse(ms).get<DatasetMeta>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidParameter(meta_path_for(csv).string() + ": " + e.what());
  }
  std::ifstream is(csv);
  if (!is) throw InvalidParameter("cannot read dataset " + csv.string());
  std::string line;
  std::getline(is, line);
  const bool has_x = line == "t,d,y,x";
  if (!has_x && line != "t,d,y") throw InvalidParameter(csv.string() + ":1: expected header t,d,y[,x]");
  auto& d = out.data;
  d.T = out.meta.T;
  d.n_x = out.meta.n_x;
  d.seed = out.meta.seed;
  d.observations.assign(d.T * d.n_x, 0.0);
  if (has_x) d.latent = std::vector<double>(d.T * d.n_x, 0.0);
  std::vector<char> seen(d.T * d.n_x, 0);
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = csv.string() + ":" + std::to_string(lineno);
    std::vector<std::string_view> f;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i)
      if (i == line.size() || line[i] == ',') {
        f.emplace_back(line.data() + start, i - start);
        start = i + 1;
      }
    if (f.size() != (has_x ? 4u : 3u)) throw InvalidParameter(where + ": wrong number of fields");
    const auto t = static_cast<std::size_t>(parse_double(f[0], where));
    const auto c = static_cast<std::size_t>(parse_double(f[1], where));
    if (t < 1 || t > d.T || c < 1 || c > d.n_x) throw InvalidParameter(where + ": index out of range");
    const std::size_t k = (t - 1) * d.n_x + (c - 1);
    d.observations[k] = parse_double(f[2], where);
    if (has_x) (*d.latent)[k] = parse_double(f[3], where);
    seen[k] = 1;
  }
  for (char s : seen)
    if (!s) throw InvalidParameter(csv.string() + ": dataset is missing (t, d) entries");
  return out;
}

inline void write_filter_output(std::ostream& os, const FilterOutput& out) {
  os << "t,stat,component,value\n";
  for (std::size_t t = 0; t < out.steps(); ++t) {
    for (std::size_t d = 0; d < out.n_x; ++d) os << t + 1 << ",mean," << d + 1 << ',' << format_double(out.mean[t][d]) << '\n';
    for (std::size_t d = 0; d < out.n_x; ++d) os << t + 1 << ",var," << d + 1 << ',' << format_double(out.var[t][d]) << '\n';
    os << t + 1 << ",logZ_increment,," << format_double(out.log_z_increment[t]) << '\n';
    os << t + 1 << ",ess,," << format_double(out.ess[t]) << '\n';
  }
}

}  // namespace nsmc

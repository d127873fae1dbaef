// Copyright 2026 The tds authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "tds/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace tds {
namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  if (!s.empty() && s.back() == sep) parts.push_back("");
  return parts;
}

[[noreturn]] void fail(const std::string& where, const std::string& what) {
  throw ConfigError(where + ": " + what);
}

double parse_double_value(const std::string& raw, const std::string& where,
                          const std::string& key) {
  const std::string v = trim(raw);
  if (v.empty()) fail(where, "empty value for '" + key + "'");
  errno = 0;
  char* end = nullptr;
  const double d = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size() || errno == ERANGE) {
    fail(where, "expected a number for '" + key + "', got '" + v + "'");
  }
  return d;
}

long long parse_ll_value(const std::string& raw, const std::string& where,
                         const std::string& key) {
  const std::string v = trim(raw);
  if (v.empty()) fail(where, "empty value for '" + key + "'");
  errno = 0;
  char* end = nullptr;
  const long long n = std::strtoll(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size() || errno == ERANGE) {
    fail(where, "expected an integer for '" + key + "', got '" + v + "'");
  }
  return n;
}

int parse_int_value(const std::string& raw, const std::string& where,
                    const std::string& key) {
  const long long n = parse_ll_value(raw, where, key);
  if (n < -2147483648LL || n > 2147483647LL) {
    fail(where, "integer out of range for '" + key + "'");
  }
  return static_cast<int>(n);
}

std::uint64_t parse_u64_value(const std::string& raw, const std::string& where,
                              const std::string& key) {
  const std::string v = trim(raw);
  if (v.empty() || v[0] == '-') {
    fail(where, "expected an unsigned integer for '" + key + "'");
  }
  errno = 0;
  char* end = nullptr;
  const unsigned long long n = std::strtoull(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size() || errno == ERANGE) {
    fail(where, "expected an unsigned integer for '" + key + "', got '" + v +
                    "'");
  }
  return static_cast<std::uint64_t>(n);
}

std::vector<double> parse_double_list(const std::string& raw,
                                      const std::string& where,
                                      const std::string& key) {
  std::vector<double> out;
  for (const auto& part : split(raw, ',')) {
    out.push_back(parse_double_value(part, where, key));
  }
  if (out.empty()) fail(where, "empty list for '" + key + "'");
  return out;
}

std::vector<int> parse_int_list(const std::string& raw,
                                const std::string& where,
                                const std::string& key) {
  std::vector<int> out;
  for (const auto& part : split(raw, ',')) {
    out.push_back(parse_int_value(part, where, key));
  }
  if (out.empty()) fail(where, "empty list for '" + key + "'");
  return out;
}

Eigen::VectorXd parse_vector_value(const std::string& raw,
                                   const std::string& where,
                                   const std::string& key) {
  const std::vector<double> v = parse_double_list(raw, where, key);
  Eigen::VectorXd out(static_cast<int>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<int>(i)] = v[i];
  return out;
}

Eigen::MatrixXd parse_matrix_value(const std::string& raw,
                                   const std::string& where,
                                   const std::string& key) {
  const std::vector<std::string> rows = split(raw, ';');
  if (rows.empty()) fail(where, "empty matrix for '" + key + "'");
  std::vector<std::vector<double>> vals;
  for (const auto& row : rows) {
    vals.push_back(parse_double_list(row, where, key));
    if (vals.back().size() != vals.front().size()) {
      fail(where, "ragged rows in matrix '" + key + "'");
    }
  }
  Eigen::MatrixXd out(static_cast<int>(vals.size()),
                      static_cast<int>(vals.front().size()));
  for (std::size_t i = 0; i < vals.size(); ++i) {
    for (std::size_t j = 0; j < vals[i].size(); ++j) {
      out(static_cast<int>(i), static_cast<int>(j)) = vals[i][j];
    }
  }
  return out;
}

std::vector<std::vector<int>> parse_mask_set_value(const std::string& raw,
                                                   const std::string& where,
                                                   const std::string& key) {
  std::vector<std::vector<int>> out;
  for (const auto& row : split(raw, ';')) {
    out.push_back(parse_int_list(row, where, key));
  }
  if (out.empty()) fail(where, "empty mask set for '" + key + "'");
  return out;
}

std::vector<std::string> parse_name_list(const std::string& raw,
                                         const std::string& where,
                                         const std::string& key) {
  std::vector<std::string> out;
  for (const auto& part : split(raw, ',')) {
    const std::string name = trim(part);
    if (name.empty()) fail(where, "empty name in list '" + key + "'");
    out.push_back(name);
  }
  if (out.empty()) fail(where, "empty list for '" + key + "'");
  return out;
}

void check_one_of(const std::string& value,
                  std::initializer_list<const char*> allowed,
                  const std::string& where, const std::string& key) {
  for (const char* a : allowed) {
    if (value == a) return;
  }
  std::string names;
  for (const char* a : allowed) {
    if (!names.empty()) names += ", ";
    names += a;
  }
  fail(where, "invalid value '" + value + "' for '" + key + "' (one of: " +
                  names + ")");
}

// One assignment, shared by file lines and --set overrides; `where` labels
// error messages ("config line 7" or "--set twist_scale").
void assign(ExperimentConfig& cfg, const std::string& key,
            const std::string& value, const std::string& where) {
  if (key == "framework") {
    check_one_of(value, {"vp", "ve", "ve_const"}, where, key);
    cfg.framework = value;
  } else if (key == "steps") {
    cfg.steps = parse_int_value(value, where, key);
    if (cfg.steps < 1) fail(where, "steps must be >= 1");
  } else if (key == "var_min") {
    cfg.var_min = parse_double_value(value, where, key);
    if (!(cfg.var_min > 0.0)) fail(where, "var_min must be > 0");
  } else if (key == "var_max") {
    cfg.var_max = parse_double_value(value, where, key);
    if (!(cfg.var_max >= 0.0)) fail(where, "var_max must be >= 0");
  } else if (key == "sigma2") {
    cfg.sigma2 = parse_double_value(value, where, key);
    if (!(cfg.sigma2 > 0.0)) fail(where, "sigma2 must be > 0");
  } else if (key == "step_vars") {
    cfg.step_vars = parse_double_list(value, where, key);
  } else if (key == "target") {
    check_one_of(value, {"gaussian", "gmm"}, where, key);
    cfg.target = value;
  } else if (key == "mean") {
    cfg.mean = parse_vector_value(value, where, key);
  } else if (key == "cov") {
    cfg.cov = parse_matrix_value(value, where, key);
  } else if (key == "gmm_weights") {
    cfg.gmm_weights = parse_double_list(value, where, key);
  } else if (key == "gmm_means") {
    cfg.gmm_means = parse_matrix_value(value, where, key);
  } else if (key == "gmm_std") {
    cfg.gmm_std = parse_double_value(value, where, key);
    if (!(cfg.gmm_std > 0.0)) fail(where, "gmm_std must be > 0");
  } else if (key == "likelihood") {
    check_one_of(value, {"smooth_norm", "inpaint", "inpaint_dof"}, where, key);
    cfg.likelihood = value;
  } else if (key == "y") {
    cfg.y = parse_vector_value(value, where, key);
  } else if (key == "mask") {
    cfg.mask = parse_int_list(value, where, key);
  } else if (key == "mask_set") {
    cfg.mask_set = parse_mask_set_value(value, where, key);
  } else if (key == "twist_scale") {
    cfg.twist_scale = parse_double_value(value, where, key);
    if (!(cfg.twist_scale >= 0.0)) fail(where, "twist_scale must be >= 0");
  } else if (key == "variance_scheme") {
    check_one_of(value, {"tds_scaling", "dps", "pigdm", "forward_var"}, where,
                 key);
    cfg.variance_scheme = value;
    cfg.variance_scheme_set = true;
  } else if (key == "data_var") {
    cfg.data_var = parse_double_value(value, where, key);
    if (!(cfg.data_var > 0.0)) fail(where, "data_var must be > 0");
    cfg.data_var_set = true;
  } else if (key == "final_step") {
    check_one_of(value, {"exact", "heuristic"}, where, key);
    cfg.final_step = value;
  } else if (key == "method") {
    check_one_of(value,
                 {"tds", "tds_is", "guidance", "naive_is", "replacement",
                  "smc_diff"},
                 where, key);
    cfg.method = value;
  } else if (key == "K") {
    cfg.particles = parse_int_value(value, where, key);
    if (cfg.particles < 1) fail(where, "K must be >= 1");
  } else if (key == "resampling") {
    check_one_of(value, {"systematic", "multinomial"}, where, key);
    cfg.resampling = value;
  } else if (key == "ess_threshold") {
    cfg.ess_threshold = parse_double_value(value, where, key);
    if (!(cfg.ess_threshold >= 0.0 && cfg.ess_threshold <= 1.0)) {
      fail(where, "ess_threshold must be in [0, 1]");
    }
  } else if (key == "proposal_var") {
    check_one_of(value, {"model", "inflated"}, where, key);
    cfg.proposal_var = value;
  } else if (key == "inflate_factor") {
    cfg.inflate_factor = parse_double_value(value, where, key);
    if (!(cfg.inflate_factor > 0.0)) fail(where, "inflate_factor must be > 0");
  } else if (key == "truncate_at") {
    cfg.truncate_at = parse_int_value(value, where, key);
    if (cfg.truncate_at < 0) fail(where, "truncate_at must be >= 0");
  } else if (key == "seed") {
    cfg.seed = parse_u64_value(value, where, key);
    cfg.seed_set = true;
  } else if (key == "workers") {
    cfg.workers = parse_int_value(value, where, key);
    if (cfg.workers < 0) fail(where, "workers must be >= 0");
  } else if (key == "output_dir") {
    const std::string v = trim(value);
    if (v.empty()) fail(where, "empty value for 'output_dir'");
    cfg.output_dir = v;
  } else if (key == "bench_methods") {
    cfg.bench_methods = parse_name_list(value, where, key);
  } else if (key == "bench_tasks") {
    cfg.bench_tasks = parse_name_list(value, where, key);
  } else if (key == "bench_K") {
    cfg.bench_particles = parse_int_list(value, where, key);
  } else if (key == "replicates") {
    cfg.replicates = parse_int_value(value, where, key);
    if (cfg.replicates < 1) fail(where, "replicates must be >= 1");
  } else if (key == "grid_lo") {
    cfg.grid_lo = parse_double_value(value, where, key);
  } else if (key == "grid_hi") {
    cfg.grid_hi = parse_double_value(value, where, key);
  } else if (key == "grid_points") {
    cfg.grid_points = parse_int_value(value, where, key);
    if (cfg.grid_points < 8) fail(where, "grid_points must be >= 8");
  } else {
    fail(where, "unknown key '" + key + "'");
  }
}

template <typename T>
[[noreturn]] void rethrow_as_config_error(const T& e) {
  throw ConfigError(e.what());
}

std::string format_double(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

std::string join_doubles(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += format_double(v[i]);
  }
  return out;
}

std::string join_vector(const Eigen::VectorXd& v) {
  std::string out;
  for (int i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += format_double(v[i]);
  }
  return out;
}

std::string join_matrix(const Eigen::MatrixXd& m) {
  std::string out;
  for (int i = 0; i < m.rows(); ++i) {
    if (i) out += "; ";
    for (int j = 0; j < m.cols(); ++j) {
      if (j) out += ",";
      out += format_double(m(i, j));
    }
  }
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

std::string join_mask_set(const std::vector<std::vector<int>>& masks) {
  std::string out;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    if (i) out += "; ";
    out += join_ints(masks[i]);
  }
  return out;
}

std::string join_names(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += v[i];
  }
  return out;
}

int resolve_workers(int configured) {
  if (configured > 0) return configured;
  const char* env = std::getenv("TDS_WORKERS");
  if (env == nullptr || *env == '\0') return 1;
  errno = 0;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || errno == ERANGE || n < 1) {
    throw ConfigError("TDS_WORKERS must be a positive integer, got '" +
                      std::string(env) + "'");
  }
  return static_cast<int>(n);
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  mean.resize(2);
  mean << 0.5, 0.5;
  cov.resize(2, 2);
  cov << 1.0, 0.9, 0.9, 1.0;
  gmm_means.resize(3, 2);
  gmm_means << 1.54, -0.29, -2.18, 0.57, -1.09, -1.40;
  y.resize(1);
  y << 0.0;
}

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(lineno);
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      fail(where, "expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(where, "missing key before '='");
    assign(cfg, key, value, where);
  }
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError("--set expects key=value, got '" + assignment + "'");
  }
  const std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  if (key.empty()) {
    throw ConfigError("--set expects key=value, got '" + assignment + "'");
  }
  assign(cfg, key, value, "--set " + key);
}

std::string print_config(const ExperimentConfig& cfg) {
  // Resolve the deferred defaults so the printout is the effective setup.
  ExperimentConfig r = cfg;
  const AnalyticTarget target = build_target(cfg);
  if (!r.data_var_set) {
    r.data_var = target.population_var();
    r.data_var_set = true;
  }
  if (!r.variance_scheme_set && r.framework != "vp") {
    r.variance_scheme = "forward_var";
  }
  r.variance_scheme_set = true;

  std::ostringstream out;
  out << "framework = " << r.framework << "\n";
  out << "steps = " << r.steps << "\n";
  out << "var_min = " << format_double(r.var_min) << "\n";
  out << "var_max = " << format_double(r.var_max) << "\n";
  out << "sigma2 = " << format_double(r.sigma2) << "\n";
  if (!r.step_vars.empty()) {
    out << "step_vars = " << join_doubles(r.step_vars) << "\n";
  }
  out << "target = " << r.target << "\n";
  out << "mean = " << join_vector(r.mean) << "\n";
  out << "cov = " << join_matrix(r.cov) << "\n";
  out << "gmm_weights = " << join_doubles(r.gmm_weights) << "\n";
  out << "gmm_means = " << join_matrix(r.gmm_means) << "\n";
  out << "gmm_std = " << format_double(r.gmm_std) << "\n";
  out << "likelihood = " << r.likelihood << "\n";
  out << "y = " << join_vector(r.y) << "\n";
  out << "mask = " << join_ints(r.mask) << "\n";
  out << "mask_set = " << join_mask_set(r.mask_set) << "\n";
  out << "twist_scale = " << format_double(r.twist_scale) << "\n";
  out << "variance_scheme = " << r.variance_scheme << "\n";
  out << "data_var = " << format_double(r.data_var) << "\n";
  out << "final_step = " << r.final_step << "\n";
  out << "method = " << r.method << "\n";
  out << "K = " << r.particles << "\n";
  out << "resampling = " << r.resampling << "\n";
  out << "ess_threshold = " << format_double(r.ess_threshold) << "\n";
  out << "proposal_var = " << r.proposal_var << "\n";
  out << "inflate_factor = " << format_double(r.inflate_factor) << "\n";
  out << "truncate_at = " << r.truncate_at << "\n";
  if (r.seed_set) out << "seed = " << r.seed << "\n";
  out << "workers = " << r.workers << "\n";
  out << "output_dir = " << r.output_dir << "\n";
  out << "bench_methods = " << join_names(r.bench_methods) << "\n";
  out << "bench_tasks = " << join_names(r.bench_tasks) << "\n";
  out << "bench_K = " << join_ints(r.bench_particles) << "\n";
  out << "replicates = " << r.replicates << "\n";
  out << "grid_lo = " << format_double(r.grid_lo) << "\n";
  out << "grid_hi = " << format_double(r.grid_hi) << "\n";
  out << "grid_points = " << r.grid_points << "\n";
  return out.str();
}

NoiseSchedule build_schedule(const ExperimentConfig& cfg) {
  try {
    if (cfg.framework == "vp") {
      if (!cfg.step_vars.empty()) return NoiseSchedule::vp(cfg.step_vars);
      return make_quadratic_vp_schedule(cfg.steps, cfg.var_min, cfg.var_max);
    }
    if (cfg.framework == "ve") {
      if (!cfg.step_vars.empty()) {
        return NoiseSchedule::ve_general(cfg.step_vars);
      }
      return NoiseSchedule::ve_const(cfg.steps, cfg.sigma2);
    }
    if (cfg.framework == "ve_const") {
      if (!cfg.step_vars.empty()) {
        throw ConfigError("step_vars conflicts with framework ve_const");
      }
      return NoiseSchedule::ve_const(cfg.steps, cfg.sigma2);
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    rethrow_as_config_error(e);
  }
  throw ConfigError("unknown framework: " + cfg.framework);
}

AnalyticTarget build_target(const ExperimentConfig& cfg) {
  try {
    if (cfg.target == "gaussian") {
      return AnalyticTarget::gaussian(cfg.mean, cfg.cov);
    }
    std::vector<Eigen::VectorXd> means;
    for (int i = 0; i < cfg.gmm_means.rows(); ++i) {
      means.push_back(cfg.gmm_means.row(i).transpose());
    }
    return AnalyticTarget::gmm(cfg.gmm_weights, means,
                               cfg.gmm_std * cfg.gmm_std);
  } catch (const std::exception& e) {
    rethrow_as_config_error(e);
  }
}

Likelihood build_likelihood(const ExperimentConfig& cfg) {
  try {
    if (cfg.likelihood == "smooth_norm") {
      if (cfg.y.size() != 1) {
        throw ConfigError("the smooth_norm likelihood takes a single y value");
      }
      return Likelihood::smooth_norm(cfg.y[0]);
    }
    if (cfg.likelihood == "inpaint") {
      return Likelihood::inpaint(cfg.mask, cfg.y);
    }
    return Likelihood::inpaint_dof(cfg.mask_set, cfg.y);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    rethrow_as_config_error(e);
  }
}

TwistConfig build_twist(const ExperimentConfig& cfg,
                        const AnalyticTarget& target) {
  TwistConfig t;
  t.twist_scale = cfg.twist_scale;
  if (cfg.variance_scheme_set) {
    t.variance_scheme = parse_variance_scheme(cfg.variance_scheme);
    if (cfg.framework != "vp" &&
        t.variance_scheme != TwistVarianceScheme::kForwardVar) {
      throw ConfigError("variance_scheme " + cfg.variance_scheme +
                        " requires the vp framework");
    }
  } else {
    t.variance_scheme = cfg.framework == "vp"
                            ? TwistVarianceScheme::kTdsScaling
                            : TwistVarianceScheme::kForwardVar;
  }
  t.data_var = cfg.data_var_set ? cfg.data_var : target.population_var();
  t.final_step = parse_final_step(cfg.final_step);
  return t;
}

SamplerConfig build_sampler(const ExperimentConfig& cfg) {
  SamplerConfig s;
  s.method = parse_method(cfg.method);
  s.particles = cfg.particles;
  s.resampling = parse_resampling(cfg.resampling);
  s.ess_threshold = cfg.ess_threshold;
  s.proposal_var_mode = parse_proposal_var(cfg.proposal_var);
  if (s.proposal_var_mode == ProposalVarMode::kInflated &&
      !(cfg.inflate_factor > 1.0)) {
    throw ConfigError("inflate_factor must be > 1 with proposal_var = inflated");
  }
  s.inflate_factor = cfg.inflate_factor;
  const int effective_steps = cfg.step_vars.empty()
                                  ? cfg.steps
                                  : static_cast<int>(cfg.step_vars.size());
  if (cfg.truncate_at >= effective_steps) {
    throw ConfigError("truncate_at must be below the number of steps");
  }
  s.truncate_at = cfg.truncate_at;
  s.seed = cfg.seed;
  s.workers = resolve_workers(cfg.workers);
  return s;
}

GridSpec build_grid(const ExperimentConfig& cfg) {
  if (!(cfg.grid_hi > cfg.grid_lo)) {
    throw ConfigError("grid_lo must be below grid_hi");
  }
  GridSpec g;
  g.lo = cfg.grid_lo;
  g.hi = cfg.grid_hi;
  g.points_per_dim = cfg.grid_points;
  return g;
}

BenchmarkSpec build_benchmark(const ExperimentConfig& cfg) {
  if (!cfg.seed_set) {
    throw ConfigError(
        "benchmark requires an explicit seed (set `seed` or pass --seed)");
  }
  BenchmarkSpec spec(build_target(cfg), build_schedule(cfg));
  spec.twist = build_twist(cfg, spec.target);
  spec.sampler = build_sampler(cfg);
  for (const auto& name : cfg.bench_methods) {
    spec.methods.push_back(parse_method(name));
  }
  for (const auto& name : cfg.bench_tasks) {
    if (name != "smooth_norm" && name != "inpaint" && name != "inpaint_dof") {
      throw ConfigError(
          "unknown benchmark task '" + name +
          "' (one of: smooth_norm, inpaint, inpaint_dof)");
    }
  }
  spec.tasks = cfg.bench_tasks;
  spec.particle_counts = cfg.bench_particles;
  spec.replicates = cfg.replicates;
  spec.base_seed = cfg.seed;
  spec.workers = resolve_workers(cfg.workers);
  spec.grid = build_grid(cfg);
  return spec;
}

Method parse_method(const std::string& name) {
  if (name == "tds") return Method::kTds;
  if (name == "tds_is") return Method::kTdsIs;
  if (name == "guidance") return Method::kGuidance;
  if (name == "naive_is") return Method::kNaiveIs;
  if (name == "replacement") return Method::kReplacement;
  if (name == "smc_diff") return Method::kSmcDiff;
  throw ConfigError("unknown method '" + name +
                    "' (one of: tds, tds_is, guidance, naive_is, replacement, "
                    "smc_diff)");
}

Resampling parse_resampling(const std::string& name) {
  if (name == "systematic") return Resampling::kSystematic;
  if (name == "multinomial") return Resampling::kMultinomial;
  throw ConfigError("unknown resampling '" + name +
                    "' (one of: systematic, multinomial)");
}

TwistVarianceScheme parse_variance_scheme(const std::string& name) {
  if (name == "tds_scaling") return TwistVarianceScheme::kTdsScaling;
  if (name == "dps") return TwistVarianceScheme::kDps;
  if (name == "pigdm") return TwistVarianceScheme::kPigdm;
  if (name == "forward_var") return TwistVarianceScheme::kForwardVar;
  throw ConfigError("unknown variance_scheme '" + name +
                    "' (one of: tds_scaling, dps, pigdm, forward_var)");
}

FinalStepMode parse_final_step(const std::string& name) {
  if (name == "exact") return FinalStepMode::kExact;
  if (name == "heuristic") return FinalStepMode::kHeuristic;
  throw ConfigError("unknown final_step '" + name +
                    "' (one of: exact, heuristic)");
}

ProposalVarMode parse_proposal_var(const std::string& name) {
  if (name == "model") return ProposalVarMode::kModelVar;
  if (name == "inflated") return ProposalVarMode::kInflated;
  throw ConfigError("unknown proposal_var '" + name +
                    "' (one of: model, inflated)");
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) {
    fs::create_directories(target.parent_path());
  }
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error("cannot write file: " + tmp.string());
    }
    out << content;
    out.flush();
    if (!out) {
      throw std::runtime_error("short write to file: " + tmp.string());
    }
  }
  fs::rename(tmp, target);
}

}  // namespace tds

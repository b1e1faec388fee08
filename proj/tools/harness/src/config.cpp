#include "rbc/harness/config.hpp"

#include <boost/algorithm/string/trim.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "rbc/error.hpp"

namespace rbc::harness {

namespace pt = boost::property_tree;

namespace {

std::string exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    boost::algorithm::trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& s) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) throw ConfigError("expected a number, got '" + s + "'");
  return v;
}

std::uint64_t to_u64(const std::string& s) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("expected a non-negative integer, got '" + s + "'");
  }
  try {
    return std::stoull(s);
  } catch (const std::out_of_range&) {
    throw ConfigError("integer out of range: '" + s + "'");
  }
}

bool to_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError("expected a boolean, got '" + s + "'");
}

template <class Parse>
auto wrap(Parse parse) {
  return [parse](const std::string& s) {
    try {
      return parse(s);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  };
}

using Handlers = std::map<std::string, std::function<void(const std::string&)>>;

void apply(const pt::ptree& tree, const std::string& section, const Handlers& handlers) {
  const auto child = tree.get_child_optional(section);
  if (!child) return;
  for (const auto& [key, node] : *child) {
    const auto it = handlers.find(key);
    if (it == handlers.end()) throw ConfigError("unknown key " + section + "." + key);
    std::string value = node.data();
    boost::algorithm::trim(value);
    try {
      it->second(value);
    } catch (const ConfigError& e) {
      throw ConfigError(section + "." + key + ": " + e.what());
    }
  }
}

}  // namespace

void SweepConfig::validate() const {
  if (losses.empty()) throw ConfigError("sweep.losses must not be empty");
  if (target_modes.empty()) throw ConfigError("sweep.target_modes must not be empty");
  if (seeds.empty()) throw ConfigError("sweep.seeds must not be empty");
  for (LossKind l : losses) {
    if (l == LossKind::HingeW1 && gammas.empty()) throw ConfigError("sweep.gammas must not be empty for hinge_w1");
  }
  for (double g : gammas) {
    if (!(g >= 0.0 && g < 1.0)) throw ConfigError("sweep.gammas must lie in [0, 1)");
  }
  if (jobs < 1) throw ConfigError("sweep.jobs must be at least 1");
}

void ExperimentConfig::validate() const {
  try {
    dataset.validate();
    model.validate();
    train.validate();
    eval.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (model.height != dataset.height || model.width != dataset.width) {
    throw ConfigError("model input size must match the dataset image size");
  }
  if (data_path && !std::filesystem::exists(*data_path)) {
    throw ConfigError("paths.data does not exist: " + data_path->string());
  }
}

double parse_gamma(const std::string& text, std::size_t bins) {
  const auto slash = text.find('/');
  if (slash == std::string::npos) return to_double(text);
  std::string denom = text.substr(slash + 1);
  boost::algorithm::trim(denom);
  if (denom != "K") throw ConfigError("gamma fractions must be written as x/K, got '" + text + "'");
  std::string num = text.substr(0, slash);
  boost::algorithm::trim(num);
  return to_double(num) / static_cast<double>(bins);
}

ExperimentConfig default_config() {
  ExperimentConfig cfg;
  cfg.sweep.gammas = {0.0, 0.5 / 64, 1.0 / 64, 1.5 / 64};
  cfg.text = render_config(cfg);
  return cfg;
}

ExperimentConfig parse_config(const std::string& text) {
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
  for (const auto& [section, node] : tree) {
    if (node.empty() && !node.data().empty()) throw ConfigError("key '" + section + "' outside of a section");
    static const char* known[] = {"dataset", "model", "train", "eval", "sweep", "paths"};
    if (std::find(std::begin(known), std::end(known), section) == std::end(known)) {
      throw ConfigError("unknown section [" + section + "]");
    }
  }

  ExperimentConfig cfg = default_config();
  auto& d = cfg.dataset;
  apply(tree, "dataset",
        {{"width", [&](const std::string& v) { d.width = to_u64(v); }},
         {"height", [&](const std::string& v) { d.height = to_u64(v); }},
         {"train_one_line", [&](const std::string& v) { d.train_one_line = to_u64(v); }},
         {"train_two_line", [&](const std::string& v) { d.train_two_line = to_u64(v); }},
         {"test_clear", [&](const std::string& v) { d.test_clear = to_u64(v); }},
         {"test_ambiguous", [&](const std::string& v) { d.test_ambiguous = to_u64(v); }},
         {"noise_sigma", [&](const std::string& v) { d.noise_sigma = to_double(v); }},
         {"contrast", [&](const std::string& v) { d.contrast = to_double(v); }},
         {"thickness", [&](const std::string& v) { d.thickness = to_double(v); }},
         {"alpha_min", [&](const std::string& v) { d.alpha_min = to_double(v); }},
         {"alpha_max", [&](const std::string& v) { d.alpha_max = to_double(v); }},
         {"min_visible_fraction", [&](const std::string& v) { d.min_visible_fraction = to_double(v); }},
         {"separate_pairs", [&](const std::string& v) { d.separate_pairs = to_bool(v); }},
         {"min_alpha_separation", [&](const std::string& v) { d.min_alpha_separation = to_double(v); }},
         {"min_rho_separation_frac", [&](const std::string& v) { d.min_rho_separation_frac = to_double(v); }},
         {"seed", [&](const std::string& v) { cfg.dataset_seed = to_u64(v); }}});

  auto& m = cfg.model;
  // Per-block settings are shared by every block listed in `conv`.
  std::vector<std::size_t> channels;
  for (const auto& b : m.conv) channels.push_back(b.channels);
  ConvBlockSpec shared = m.conv.empty() ? ConvBlockSpec{} : m.conv.front();
  apply(tree, "model",
        {{"conv",
          [&](const std::string& v) {
            channels.clear();
            for (const auto& c : split_list(v)) channels.push_back(to_u64(c));
          }},
         {"kernel", [&](const std::string& v) { shared.kernel = to_u64(v); }},
         {"stride", [&](const std::string& v) { shared.stride = to_u64(v); }},
         {"leaky_slope", [&](const std::string& v) { shared.leaky_slope = to_double(v); }},
         {"pooling", [&](const std::string& v) { m.pooling = parse_pooling(v); }},
         {"bins", [&](const std::string& v) { m.bins = to_u64(v); }},
         {"head", [&](const std::string& v) { m.head = wrap(parse_head_kind)(v); }},
         {"height", [&](const std::string& v) { m.height = to_u64(v); }},
         {"width", [&](const std::string& v) { m.width = to_u64(v); }}});
  m.conv.clear();
  for (std::size_t c : channels) m.conv.push_back({c, shared.kernel, shared.stride, shared.leaky_slope});
  // The model input follows the dataset unless set explicitly.
  const auto model_node = tree.get_child_optional("model");
  if (!model_node || !model_node->get_child_optional("height")) m.height = d.height;
  if (!model_node || !model_node->get_child_optional("width")) m.width = d.width;

  auto& t = cfg.train;
  std::optional<std::string> gamma_text;
  apply(tree, "train",
        {{"loss", [&](const std::string& v) { t.loss.kind = wrap(parse_loss_kind)(v); }},
         {"gamma", [&](const std::string& v) { gamma_text = v; }},
         {"hinge_fallback",
          [&](const std::string& v) {
            if (v == "uniform") t.loss.hinge.fallback = HingeFallback::Uniform;
            else if (v == "error") t.loss.hinge.fallback = HingeFallback::Error;
            else throw ConfigError("expected uniform or error, got '" + v + "'");
          }},
         {"target_sigma", [&](const std::string& v) { t.target_sigma = to_double(v); }},
         {"target_mode", [&](const std::string& v) { t.target_mode = parse_target_mode(v); }},
         {"epochs", [&](const std::string& v) { t.epochs = to_u64(v); }},
         {"batch_size", [&](const std::string& v) { t.batch_size = to_u64(v); }},
         {"learning_rate", [&](const std::string& v) { t.adam.learning_rate = to_double(v); }},
         {"beta1", [&](const std::string& v) { t.adam.beta1 = to_double(v); }},
         {"beta2", [&](const std::string& v) { t.adam.beta2 = to_double(v); }},
         {"epsilon", [&](const std::string& v) { t.adam.epsilon = to_double(v); }},
         {"seed", [&](const std::string& v) { t.seed = to_u64(v); }},
         {"workers", [&](const std::string& v) { t.workers = to_u64(v); }}});
  if (gamma_text) {
    try {
      t.loss.hinge.gamma = parse_gamma(*gamma_text, m.bins);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("train.gamma: ") + e.what());
    }
  }

  auto& e = cfg.eval;
  apply(tree, "eval",
        {{"measure", [&](const std::string& v) { e.measure = wrap(parse_uncertainty_measure)(v); }},
         {"auc_cutoff", [&](const std::string& v) { e.auc_cutoff = to_double(v); }},
         {"sparsification_steps", [&](const std::string& v) { e.sparsification_steps = to_u64(v); }},
         {"crps", [&](const std::string& v) { e.crps = to_bool(v); }},
         {"auc_split", [&](const std::string& v) { e.auc_split = parse_eval_split(v); }},
         {"ause_split", [&](const std::string& v) { e.ause_split = parse_eval_split(v); }},
         {"min_mode_separation", [&](const std::string& v) { e.min_mode_separation = to_u64(v); }},
         {"mode_threshold", [&](const std::string& v) { e.mode_threshold = to_double(v); }},
         {"kde_points", [&](const std::string& v) { e.kde_points = to_u64(v); }},
         {"workers", [&](const std::string& v) { e.workers = to_u64(v); }}});

  auto& s = cfg.sweep;
  std::optional<std::string> gammas_text;
  apply(tree, "sweep",
        {{"losses",
          [&](const std::string& v) {
            s.losses.clear();
            for (const auto& x : split_list(v)) s.losses.push_back(wrap(parse_loss_kind)(x));
          }},
         {"gammas", [&](const std::string& v) { gammas_text = v; }},
         {"target_modes",
          [&](const std::string& v) {
            s.target_modes.clear();
            for (const auto& x : split_list(v)) s.target_modes.push_back(parse_target_mode(x));
          }},
         {"seeds",
          [&](const std::string& v) {
            s.seeds.clear();
            for (const auto& x : split_list(v)) s.seeds.push_back(to_u64(x));
          }},
         {"jobs", [&](const std::string& v) { s.jobs = to_u64(v); }}});
  if (gammas_text) {
    s.gammas.clear();
    try {
      for (const auto& x : split_list(*gammas_text)) s.gammas.push_back(parse_gamma(x, m.bins));
    } catch (const ConfigError& err) {
      throw ConfigError(std::string("sweep.gammas: ") + err.what());
    }
  } else {
    s.gammas = {0.0, 0.5 / static_cast<double>(m.bins), 1.0 / static_cast<double>(m.bins),
                1.5 / static_cast<double>(m.bins)};
  }

  apply(tree, "paths", {{"data", [&](const std::string& v) { cfg.data_path = std::filesystem::path(v); }}});

  cfg.text = text;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config(buf.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string render_config(const ExperimentConfig& cfg) {
  std::ostringstream out;
  const auto& d = cfg.dataset;
  out << "[dataset]\n"
      << "seed = " << cfg.dataset_seed << '\n'
      << "width = " << d.width << '\n'
      << "height = " << d.height << '\n'
      << "train_one_line = " << d.train_one_line << '\n'
      << "train_two_line = " << d.train_two_line << '\n'
      << "test_clear = " << d.test_clear << '\n'
      << "test_ambiguous = " << d.test_ambiguous << '\n'
      << "noise_sigma = " << exact(d.noise_sigma) << '\n'
      << "contrast = " << exact(d.contrast) << '\n'
      << "thickness = " << exact(d.thickness) << '\n'
      << "alpha_min = " << exact(d.alpha_min) << '\n'
      << "alpha_max = " << exact(d.alpha_max) << '\n'
      << "min_visible_fraction = " << exact(d.min_visible_fraction) << '\n'
      << "separate_pairs = " << (d.separate_pairs ? "true" : "false") << '\n'
      << "min_alpha_separation = " << exact(d.min_alpha_separation) << '\n'
      << "min_rho_separation_frac = " << exact(d.min_rho_separation_frac) << "\n\n";

  const auto& m = cfg.model;
  out << "[model]\nconv = ";
  for (std::size_t i = 0; i < m.conv.size(); ++i) out << (i ? "," : "") << m.conv[i].channels;
  const ConvBlockSpec shared = m.conv.empty() ? ConvBlockSpec{} : m.conv.front();
  out << '\n'
      << "kernel = " << shared.kernel << '\n'
      << "stride = " << shared.stride << '\n'
      << "leaky_slope = " << exact(shared.leaky_slope) << '\n'
      << "pooling = " << to_string(m.pooling) << '\n'
      << "bins = " << m.bins << '\n'
      << "head = " << to_string(m.head) << "\n\n";

  const auto& t = cfg.train;
  out << "[train]\n"
      << "loss = " << to_string(t.loss.kind) << '\n'
      << "gamma = " << exact(t.loss.hinge.gamma) << '\n'
      << "hinge_fallback = " << (t.loss.hinge.fallback == HingeFallback::Uniform ? "uniform" : "error") << '\n'
      << "target_sigma = " << exact(t.target_sigma) << '\n'
      << "target_mode = " << to_string(t.target_mode) << '\n'
      << "epochs = " << t.epochs << '\n'
      << "batch_size = " << t.batch_size << '\n'
      << "learning_rate = " << exact(t.adam.learning_rate) << '\n'
      << "beta1 = " << exact(t.adam.beta1) << '\n'
      << "beta2 = " << exact(t.adam.beta2) << '\n'
      << "epsilon = " << exact(t.adam.epsilon) << '\n'
      << "seed = " << t.seed << '\n'
      << "workers = " << t.workers << "\n\n";

  const auto& e = cfg.eval;
  out << "[eval]\n"
      << "measure = " << to_string(e.measure) << '\n'
      << "auc_cutoff = " << exact(e.auc_cutoff) << '\n'
      << "sparsification_steps = " << e.sparsification_steps << '\n'
      << "crps = " << (e.crps ? "true" : "false") << '\n'
      << "auc_split = " << to_string(e.auc_split) << '\n'
      << "ause_split = " << to_string(e.ause_split) << '\n'
      << "min_mode_separation = " << e.min_mode_separation << '\n'
      << "mode_threshold = " << exact(e.mode_threshold) << '\n'
      << "kde_points = " << e.kde_points << '\n'
      << "workers = " << e.workers << "\n\n";

  const auto& s = cfg.sweep;
  out << "[sweep]\nlosses = ";
  for (std::size_t i = 0; i < s.losses.size(); ++i) out << (i ? "," : "") << to_string(s.losses[i]);
  out << "\ngammas = ";
  for (std::size_t i = 0; i < s.gammas.size(); ++i) out << (i ? "," : "") << exact(s.gammas[i]);
  out << "\ntarget_modes = ";
  for (std::size_t i = 0; i < s.target_modes.size(); ++i) out << (i ? "," : "") << to_string(s.target_modes[i]);
  out << "\nseeds = ";
  for (std::size_t i = 0; i < s.seeds.size(); ++i) out << (i ? "," : "") << s.seeds[i];
  out << "\njobs = " << s.jobs << '\n';

  if (cfg.data_path) out << "\n[paths]\ndata = " << cfg.data_path->string() << '\n';
  return out.str();
}

}  // namespace rbc::harness

#include "guef/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "guef/error.hpp"

namespace guef {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ValidationError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) {
    throw ValidationError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ValidationError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const std::string& v = value;
  if (key == "feature_dim") dims.feature_dim = to_uint(key, v);
  else if (key == "classes") dims.classes = to_uint(key, v);
  else if (key == "hidden") dims.hidden = to_uint(key, v);
  else if (key == "heads") dims.heads = to_uint(key, v);
  else if (key == "max_snippets") max_snippets = to_uint(key, v);
  else if (key == "learning_rate") learning_rate = to_double(key, v);
  else if (key == "iterations") iterations = to_uint(key, v);
  else if (key == "batch_size") batch_size = to_uint(key, v);
  else if (key == "lambda1") lambda1 = to_double(key, v);
  else if (key == "lambda2") lambda2 = to_double(key, v);
  else if (key == "delta") delta = to_double(key, v);
  else if (key == "topk_ratio") topk_ratio = to_double(key, v);
  else if (key == "nms_iou") nms_iou = to_double(key, v);
  else if (key == "class_gate") class_gate = to_double(key, v);
  else if (key == "checkpoint_every") checkpoint_every = to_uint(key, v);
  else if (key == "use_guef") use_guef = to_bool(key, v);
  else if (key == "use_hmha") use_hmha = to_bool(key, v);
  else if (key == "audit_masses") audit_masses = to_bool(key, v);
  else if (key == "seed") seed = to_uint(key, v);
  else if (key == "thresholds") {
    thresholds.clear();
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) thresholds.push_back(to_double(key, trim(item)));
  } else if (key == "synth.train_videos") synth.train_videos = to_uint(key, v);
  else if (key == "synth.test_videos") synth.test_videos = to_uint(key, v);
  else if (key == "synth.width") synth.width = to_uint(key, v);
  else if (key == "synth.noise") synth.noise = to_double(key, v);
  else if (key == "synth.distractor") synth.distractor = to_double(key, v);
  else if (key == "synth.distractor_rate") synth.distractor_rate = to_double(key, v);
  else if (key == "synth.min_len") synth.min_len = to_uint(key, v);
  else if (key == "synth.max_len") synth.max_len = to_uint(key, v);
  else if (key == "synth.fps") synth.fps = to_double(key, v);
  else if (key == "synth.multi_class_rate") synth.multi_class_rate = to_double(key, v);
  else throw ValidationError("unknown config key '" + key + "'");
}

RunConfig RunConfig::parse(std::istream& in) {
  RunConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatErrorKind::kIo, "cannot open config " + path.string());
  return parse(in);
}

void RunConfig::validate() const {
  dims.validate();
  if (max_snippets == 0 || batch_size == 0) {
    throw ValidationError("max_snippets and batch_size must be positive");
  }
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  LossConfig{lambda1, lambda2, delta, 1, topk_ratio}.validate();
  for (double t : thresholds)
    if (!(t > 0.0 && t < 1.0)) throw ValidationError("proposal thresholds must lie in (0,1)");
  if (!(nms_iou > 0.0 && nms_iou <= 1.0)) throw ValidationError("nms_iou must lie in (0,1]");
  if (!seed) throw ValidationError("a seed is required (config key 'seed' or --seed)");
}

std::uint64_t RunConfig::require_seed() const {
  if (!seed) throw ValidationError("a seed is required (config key 'seed' or --seed)");
  return *seed;
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  out << "feature_dim = " << dims.feature_dim << "\nclasses = " << dims.classes << "\nhidden = " << dims.hidden
      << "\nheads = " << dims.heads << "\nmax_snippets = " << max_snippets << "\nlearning_rate = " << fmt(learning_rate)
      << "\niterations = " << iterations << "\nbatch_size = " << batch_size << "\nlambda1 = " << fmt(lambda1)
      << "\nlambda2 = " << fmt(lambda2) << "\ndelta = " << fmt(delta) << "\ntopk_ratio = " << fmt(topk_ratio)
      << "\nthresholds = ";
  for (std::size_t i = 0; i < thresholds.size(); ++i) out << (i ? "," : "") << fmt(thresholds[i]);
  out << "\nnms_iou = " << fmt(nms_iou) << "\nclass_gate = " << fmt(class_gate)
      << "\ncheckpoint_every = " << checkpoint_every << "\nuse_guef = " << (use_guef ? "true" : "false")
      << "\nuse_hmha = " << (use_hmha ? "true" : "false") << "\naudit_masses = " << (audit_masses ? "true" : "false")
      << '\n';
  if (seed) out << "seed = " << *seed << '\n';
  out << "synth.train_videos = " << synth.train_videos << "\nsynth.test_videos = " << synth.test_videos
      << "\nsynth.width = " << synth.width << "\nsynth.noise = " << fmt(synth.noise)
      << "\nsynth.distractor = " << fmt(synth.distractor) << "\nsynth.distractor_rate = " << fmt(synth.distractor_rate)
      << "\nsynth.min_len = " << synth.min_len << "\nsynth.max_len = " << synth.max_len
      << "\nsynth.fps = " << fmt(synth.fps) << "\nsynth.multi_class_rate = " << fmt(synth.multi_class_rate) << '\n';
  return out.str();
}

}  // namespace guef

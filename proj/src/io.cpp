#include "guef/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "guef/error.hpp"

namespace guef {
namespace {

using json = nlohmann::json;

constexpr char kFeatureMagic[4] = {'G', 'U', 'E', 'F'};
constexpr char kCheckpointMagic[4] = {'G', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
void put_le(std::string& out, T value) {
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
  out.append(reinterpret_cast<const char*>(bytes), sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <class T>
  T get(const char* what) {
    if (bytes_.size() - pos_ < sizeof(T)) {
      throw FormatError(FormatErrorKind::kTruncated, std::string("truncated while reading ") + what);
    }
    unsigned char raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    pos_ += sizeof(T);
    T value;
    std::memcpy(&value, raw, sizeof(T));
    return value;
  }

  std::string take(std::size_t n, const char* what) {
    if (bytes_.size() - pos_ < n) throw FormatError(FormatErrorKind::kTruncated, std::string("truncated ") + what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorKind::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void dump(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrorKind::kIo, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatErrorKind::kIo, "short write to " + path.string());
}

std::uint32_t checked_u32(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint32_t>::max()) {
    throw FormatError(FormatErrorKind::kShapeOverflow, std::string(what) + " does not fit in 32 bits");
  }
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::string encode_features(const Tensor& features) {
  if (features.rank() != 2) throw ValidationError("features must be D x W, got " + shape_string(features.shape()));
  if (!features.all_finite()) throw NonFiniteValueError("features contain non-finite values");
  std::string out(kFeatureMagic, 4);
  put_le(out, kFeatureVersion);
  put_le(out, checked_u32(features.rows(), "D"));
  put_le(out, checked_u32(features.cols(), "W"));
  put_le(out, std::uint32_t{0});
  out.reserve(out.size() + 4 * features.size());
  for (double v : features.values()) put_le(out, static_cast<float>(v));
  return out;
}

Tensor decode_features(const std::string& bytes) {
  Reader r(bytes);
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kFeatureMagic, 4) != 0) {
    throw FormatError(FormatErrorKind::kBadMagic, "not a feature file (bad magic)");
  }
  r.take(4, "magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kFeatureVersion) {
    throw FormatError(FormatErrorKind::kBadVersion, "unsupported feature version " + std::to_string(version));
  }
  const auto d = r.get<std::uint32_t>("D");
  const auto w = r.get<std::uint32_t>("W");
  const auto dtype = r.get<std::uint32_t>("dtype");
  if (dtype != 0) throw FormatError(FormatErrorKind::kBadDtype, "unsupported dtype " + std::to_string(dtype));
  if (d == 0 || w == 0) {
    throw FormatError(FormatErrorKind::kShapeOverflow, "empty feature shape " + std::to_string(d) + "x" + std::to_string(w));
  }
  // d * w < 2^64, but d * w * 4 can overflow; compare element counts instead.
  const std::uint64_t count = std::uint64_t{d} * w;
  if (count > (std::uint64_t{1} << 36)) {
    throw FormatError(FormatErrorKind::kShapeOverflow,
                      "implausible feature shape " + std::to_string(d) + "x" + std::to_string(w));
  }
  if (r.remaining() < count * 4) {
    throw FormatError(FormatErrorKind::kTruncated, "payload holds " + std::to_string(r.remaining()) +
                                                       " bytes, header implies " + std::to_string(count * 4));
  }
  if (r.remaining() > count * 4) throw FormatError(FormatErrorKind::kSyntax, "trailing bytes after feature payload");
  std::vector<double> data(count);
  for (auto& v : data) {
    v = r.get<float>("payload");
    if (!std::isfinite(v)) throw FormatError(FormatErrorKind::kSyntax, "feature payload contains a non-finite value");
  }
  return Tensor({d, w}, std::move(data));
}

Tensor read_features(const std::filesystem::path& path) { return decode_features(slurp(path)); }
void write_features(const std::filesystem::path& path, const Tensor& features) {
  dump(path, encode_features(features));
}

std::string encode_checkpoint(const ModelParams& params) {
  params.validate();
  const ModelDims& d = params.dims();
  std::string out(kCheckpointMagic, 4);
  put_le(out, kCheckpointVersion);
  put_le(out, checked_u32(d.feature_dim, "D"));
  put_le(out, checked_u32(d.classes, "T"));
  put_le(out, checked_u32(d.hidden, "hidden"));
  put_le(out, checked_u32(d.heads, "heads"));
  std::uint32_t count = 0;
  params.for_each([&](const char*, const Tensor&) { ++count; });
  put_le(out, count);
  params.for_each([&](const char* name, const Tensor& t) {
    const std::string n(name);
    put_le(out, checked_u32(n.size(), "name"));
    out += n;
    put_le(out, checked_u32(t.rank(), "rank"));
    for (std::size_t dim : t.shape()) put_le(out, checked_u32(dim, "dim"));
    for (double v : t.values()) put_le(out, v);
  });
  return out;
}

ModelParams decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError(FormatErrorKind::kBadMagic, "not a checkpoint (bad magic)");
  }
  Reader r(bytes);
  r.take(4, "magic");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError(FormatErrorKind::kBadVersion, "unsupported checkpoint version " + std::to_string(version));
  }
  ModelDims dims;
  dims.feature_dim = r.get<std::uint32_t>("D");
  dims.classes = r.get<std::uint32_t>("T");
  dims.hidden = r.get<std::uint32_t>("hidden");
  dims.heads = r.get<std::uint32_t>("heads");
  ModelParams params = ModelParams::zeros(dims);
  const auto count = r.get<std::uint32_t>("tensor count");
  std::uint32_t expected = 0;
  params.for_each([&](const char*, const Tensor&) { ++expected; });
  if (count != expected) {
    throw FormatError(FormatErrorKind::kSyntax, "checkpoint holds " + std::to_string(count) + " tensors, expected " +
                                                    std::to_string(expected));
  }
  params.for_each([&](const char* name, Tensor& t) {
    const auto name_len = r.get<std::uint32_t>("name length");
    const std::string stored = r.take(name_len, "tensor name");
    if (stored != name) throw FormatError(FormatErrorKind::kSyntax, "expected tensor " + std::string(name) + ", found " + stored);
    const auto rank = r.get<std::uint32_t>("rank");
    Tensor::Shape shape(rank);
    for (auto& dim : shape) dim = r.get<std::uint32_t>("dim");
    if (shape != t.shape()) {
      throw FormatError(FormatErrorKind::kShapeOverflow, "tensor " + stored + " has shape " + shape_string(shape) +
                                                             ", expected " + shape_string(t.shape()));
    }
    for (double& v : t.data()) v = r.get<double>("payload");
  });
  if (r.remaining() != 0) throw FormatError(FormatErrorKind::kSyntax, "trailing bytes after checkpoint");
  params.validate();
  return params;
}

void write_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  dump(path, encode_checkpoint(params));
}

ModelParams read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(slurp(path)); }

Manifest Manifest::parse(std::istream& in, const std::filesystem::path& base_dir) {
  Manifest m;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      VideoRecord v;
      v.id = j.at("id").get<std::string>();
      if (!seen.insert(v.id).second) throw ValidationError("duplicate video id '" + v.id + "'");
      std::filesystem::path rgb = j.at("rgb").get<std::string>();
      std::filesystem::path flow = j.at("flow").get<std::string>();
      v.rgb = rgb.is_absolute() ? rgb : base_dir / rgb;
      v.flow = flow.is_absolute() ? flow : base_dir / flow;
      v.labels = j.value("labels", std::vector<std::size_t>{});
      if (j.contains("segments")) {
        for (const auto& s : j.at("segments")) {
          LabeledSegment seg{{s.at("start").get<std::size_t>(), s.at("end").get<std::size_t>()},
                             s.at("label").get<std::size_t>()};
          if (seg.segment.start >= seg.segment.end) throw ValidationError("empty segment in video '" + v.id + "'");
          v.segments.push_back(seg);
        }
      }
      v.fps = j.value("fps", 25.0);
      v.split = j.value("split", std::string("train"));
      m.videos.push_back(std::move(v));
    } catch (const json::exception& err) {
      throw FormatError(FormatErrorKind::kSyntax, "manifest line " + std::to_string(lineno) + ": " + err.what());
    } catch (const ValidationError& err) {
      throw ValidationError("manifest line " + std::to_string(lineno) + ": " + err.what());
    }
  }
  return m;
}

Manifest Manifest::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatErrorKind::kIo, "cannot open manifest " + path.string());
  return parse(in, path.parent_path());
}

void Manifest::write(const std::filesystem::path& path) const {
  const auto base = path.parent_path();
  std::ostringstream out;
  for (const auto& v : videos) {
    json segs = json::array();
    for (const auto& s : v.segments) segs.push_back({{"start", s.segment.start}, {"end", s.segment.end}, {"label", s.label}});
    json j = {{"id", v.id},
              {"rgb", v.rgb.lexically_relative(base).generic_string()},
              {"flow", v.flow.lexically_relative(base).generic_string()},
              {"labels", v.labels},
              {"segments", segs},
              {"fps", v.fps},
              {"split", v.split}};
    out << j.dump() << '\n';
  }
  dump(path, out.str());
}

std::vector<const VideoRecord*> Manifest::split(const std::string& name) const {
  std::vector<const VideoRecord*> out;
  for (const auto& v : videos)
    if (name.empty() || v.split == name) out.push_back(&v);
  return out;
}

const VideoRecord* Manifest::find(const std::string& id) const {
  for (const auto& v : videos)
    if (v.id == id) return &v;
  return nullptr;
}

std::vector<GroundTruth> Manifest::ground_truth(const std::string& split_name) const {
  std::vector<GroundTruth> out;
  for (const VideoRecord* v : split(split_name))
    for (const auto& s : v->segments) out.push_back({v->id, s.segment, s.label});
  return out;
}

void write_proposals(std::ostream& out, const std::vector<Proposal>& proposals, const Manifest* manifest) {
  for (const auto& p : proposals) {
    double fps = 25.0;
    if (manifest) {
      if (const VideoRecord* v = manifest->find(p.video)) fps = v->fps;
    }
    const json j = {{"video", p.video},
                    {"start", p.segment.start},
                    {"end", p.segment.end},
                    {"label", p.label},
                    {"score", p.score},
                    {"t_start", static_cast<double>(p.segment.start) * 16.0 / fps},
                    {"t_end", static_cast<double>(p.segment.end) * 16.0 / fps}};
    out << j.dump() << '\n';
  }
}

std::vector<Proposal> read_proposals(std::istream& in) {
  std::vector<Proposal> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      Proposal p;
      p.video = j.at("video").get<std::string>();
      p.segment = {j.at("start").get<std::size_t>(), j.at("end").get<std::size_t>()};
      p.label = j.at("label").get<std::size_t>();
      p.score = j.at("score").get<double>();
      out.push_back(std::move(p));
    } catch (const json::exception& err) {
      throw FormatError(FormatErrorKind::kSyntax, "proposal line " + std::to_string(lineno) + ": " + err.what());
    }
  }
  return out;
}

}  // namespace guef

#include "tal/data.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "tal/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "feature serialization assumes a little-endian host");

namespace tal {

namespace {

constexpr char kFeatMagic[5] = {'T', 'A', 'L', 'X', '1'};

template <class T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <class T>
void read_pod(std::istream& is, T& v, const char* what) {
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw IoError(std::string("feature file: truncated while reading ") + what);
}

}  // namespace

Tensor FeatureSequence::tensor() const {
  Tensor out;
  out.shape = {t, c};
  out.data = data;
  return out;
}

void save_features(const std::filesystem::path& path, const FeatureSequence& fs) {
  if (fs.data.size() != static_cast<size_t>(fs.t) * fs.c)
    throw ContractError("save_features: payload length does not match T*C");
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("save_features: cannot open " + tmp.string());
    os.write(kFeatMagic, sizeof(kFeatMagic));
    write_pod(os, fs.t);
    write_pod(os, fs.c);
    write_pod(os, fs.frame_rate);
    write_pod(os, fs.stride);
    os.write(reinterpret_cast<const char*>(fs.data.data()),
             static_cast<std::streamsize>(fs.data.size() * sizeof(double)));
    if (!os) throw IoError("save_features: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

FeatureSequence load_features(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("load_features: cannot open " + path.string());
  char magic[5];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kFeatMagic, sizeof(kFeatMagic)) != 0)
    throw IoError("load_features: bad magic in " + path.string());
  FeatureSequence fs;
  read_pod(is, fs.t, "T");
  read_pod(is, fs.c, "C");
  read_pod(is, fs.frame_rate, "frame_rate");
  read_pod(is, fs.stride, "stride");
  if (fs.t == 0 || fs.c == 0) throw IoError("load_features: zero extent in " + path.string());
  size_t n = static_cast<size_t>(fs.t) * fs.c;
  if (n > (1u << 28)) throw IoError("load_features: implausible payload in " + path.string());
  fs.data.resize(n);
  is.read(reinterpret_cast<char*>(fs.data.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw IoError("load_features: truncated payload in " + path.string());
  return fs;
}

const VideoAnnotation* DatasetAnnotations::find(const std::string& id) const {
  for (const auto& v : videos)
    if (v.id == id) return &v;
  return nullptr;
}

void atomic_write_text(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::trunc);
    if (!os) throw IoError("atomic_write_text: cannot open " + tmp.string());
    os << content;
    if (!os) throw IoError("atomic_write_text: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_annotations(const std::filesystem::path& path, const DatasetAnnotations& ds, bool weak) {
  nlohmann::ordered_json j;
  j["classes"] = ds.classes;
  j["videos"] = nlohmann::ordered_json::array();
  for (const auto& v : ds.videos) {
    nlohmann::ordered_json jv;
    jv["id"] = v.id;
    jv["duration"] = v.duration;
    jv["trimmed"] = v.trimmed;
    jv["split"] = v.split;
    jv["labels"] = v.labels;
    if (!weak) {
      auto segs = nlohmann::ordered_json::array();
      for (const auto& s : v.segments)
        segs.push_back({{"class", s.class_id}, {"s", s.s}, {"e", s.e}});
      jv["segments"] = segs;
    }
    j["videos"].push_back(jv);
  }
  atomic_write_text(path, j.dump(1));
}

DatasetAnnotations load_annotations(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("load_annotations: cannot open " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("load_annotations: malformed JSON in " + path.string() + ": " + e.what());
  }
  DatasetAnnotations ds;
  ds.classes = j.value("classes", std::vector<std::string>{});
  for (const auto& jv : j.value("videos", nlohmann::json::array())) {
    VideoAnnotation v;
    v.id = jv.at("id").get<std::string>();
    v.duration = jv.at("duration").get<double>();
    v.trimmed = jv.value("trimmed", false);
    v.split = jv.value("split", "train");
    v.labels = jv.value("labels", std::vector<int>{});
    for (const auto& js : jv.value("segments", nlohmann::json::array())) {
      GtInstance g;
      g.video_id = v.id;
      g.class_id = js.at("class").get<int>();
      g.s = js.at("s").get<double>();
      g.e = js.at("e").get<double>();
      if (g.s < 0.0 || g.e > v.duration || !(g.s < g.e))
        throw IoError("load_annotations: segment outside [0, duration] in video " + v.id);
      v.segments.push_back(g);
    }
    for (int k : v.labels)
      if (k < 0 || static_cast<size_t>(k) >= ds.classes.size())
        throw IoError("load_annotations: label out of range in video " + v.id);
    ds.videos.push_back(std::move(v));
  }
  return ds;
}

std::vector<GtInstance> collect_instances(const DatasetAnnotations& ds, const std::string& split) {
  std::vector<GtInstance> out;
  for (const auto& v : ds.videos) {
    if (!split.empty() && v.split != split) continue;
    for (const auto& s : v.segments) out.push_back(s);
  }
  return out;
}

void save_proposals(const std::filesystem::path& path, const std::vector<Proposal>& ps) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6);
  for (const auto& p : ps) os << p.video_id << " " << p.s << " " << p.e << " " << p.score << "\n";
  atomic_write_text(path, os.str());
}

std::vector<Proposal> load_proposals(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("load_proposals: cannot open " + path.string());
  std::vector<Proposal> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    Proposal p;
    if (!(ls >> p.video_id >> p.s >> p.e >> p.score))
      throw IoError("load_proposals: malformed line " + std::to_string(lineno) + " in " +
                    path.string());
    out.push_back(p);
  }
  return out;
}

void save_detections(const std::filesystem::path& path, const std::vector<Detection>& ds) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6);
  for (const auto& d : ds)
    os << d.video_id << " " << d.class_id << " " << d.s << " " << d.e << " " << d.score << "\n";
  atomic_write_text(path, os.str());
}

std::vector<Detection> load_detections(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("load_detections: cannot open " + path.string());
  std::vector<Detection> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    Detection d;
    if (!(ls >> d.video_id >> d.class_id >> d.s >> d.e >> d.score))
      throw IoError("load_detections: malformed line " + std::to_string(lineno) + " in " +
                    path.string());
    out.push_back(d);
  }
  return out;
}

void save_cas_matrix(const std::filesystem::path& path, const Tensor& cas,
                     const std::vector<std::string>& class_names) {
  if (cas.rank() != 2 || cas.cols() != class_names.size())
    throw DimensionError("save_cas_matrix: class names must match CAS columns");
  std::ostringstream os;
  for (size_t k = 0; k < class_names.size(); ++k) os << (k ? " " : "") << class_names[k];
  os << "\n" << std::fixed << std::setprecision(6);
  for (size_t t = 0; t < cas.rows(); ++t) {
    for (size_t k = 0; k < cas.cols(); ++k) os << (k ? " " : "") << cas.at2(t, k);
    os << "\n";
  }
  atomic_write_text(path, os.str());
}

}  // namespace tal

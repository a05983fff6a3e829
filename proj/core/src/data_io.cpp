#include "m2d/data_io.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace m2d {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

TrainRecord to_train_view(const AnnotationRecord& r) {
  return TrainRecord{r.video_id, r.duration_s, r.query_tokens};
}

std::vector<TrainRecord> to_train_view(const std::vector<AnnotationRecord>& rs) {
  std::vector<TrainRecord> out;
  out.reserve(rs.size());
  for (const auto& r : rs) out.push_back(to_train_view(r));
  return out;
}

// ---------------------------------------------------------------------------
// feature files

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

void put_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

std::uint32_t get_u32(std::istream& is, const std::string& path, const char* what) {
  const auto offset = is.tellg();
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw ParseError("feature file '" + path + "': truncated reading " + what + " at offset " +
                     std::to_string(static_cast<long long>(offset)));
  }
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint64_t get_u64(std::istream& is, const std::string& path, const char* what) {
  const auto offset = is.tellg();
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) {
    throw ParseError("feature file '" + path + "': truncated reading " + what + " at offset " +
                     std::to_string(static_cast<long long>(offset)));
  }
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace

void write_feature_file(const FeatureFile& f, const std::string& path) {
  if (f.n_clips * f.dim != static_cast<std::int64_t>(f.data.size())) {
    throw DimensionError("write_feature_file: data length does not equal n_clips * dim");
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ParseError("feature file '" + path + "': cannot open for writing");
  os.write("M2DF", 4);
  put_u32(os, kFeatureFileVersion);
  put_u32(os, static_cast<std::uint32_t>(f.video_id.size()));
  os.write(f.video_id.data(), static_cast<std::streamsize>(f.video_id.size()));
  put_u64(os, static_cast<std::uint64_t>(f.n_clips));
  put_u64(os, static_cast<std::uint64_t>(f.dim));
  for (float v : f.data) put_f32(os, v);
  if (!os) throw ParseError("feature file '" + path + "': write failed");
}

FeatureFile read_feature_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError("feature file '" + path + "': cannot open");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "M2DF", 4) != 0) {
    throw ParseError("feature file '" + path + "': bad magic bytes at offset 0");
  }
  const std::uint32_t version = get_u32(is, path, "version");
  if (version != kFeatureFileVersion) {
    throw ParseError("feature file '" + path + "': unsupported version " +
                     std::to_string(version));
  }
  FeatureFile f;
  const std::uint32_t id_len = get_u32(is, path, "video_id length");
  f.video_id.resize(id_len);
  if (id_len > 0 && !is.read(f.video_id.data(), id_len)) {
    throw ParseError("feature file '" + path + "': truncated video_id");
  }
  f.n_clips = static_cast<std::int64_t>(get_u64(is, path, "n_clips"));
  f.dim = static_cast<std::int64_t>(get_u64(is, path, "dim"));
  if (f.n_clips < 0 || f.dim < 0) {
    throw ParseError("feature file '" + path + "': negative header field");
  }
  f.data.resize(static_cast<std::size_t>(f.n_clips * f.dim));
  for (auto& v : f.data) {
    const std::uint32_t bits = get_u32(is, path, "feature data");
    std::memcpy(&v, &bits, 4);
  }
  // Trailing bytes mean the header lied about the length.
  char extra;
  if (is.read(&extra, 1)) {
    throw ParseError("feature file '" + path + "': trailing bytes after feature data");
  }
  return f;
}

// ---------------------------------------------------------------------------
// annotations

void write_annotations(const std::vector<AnnotationRecord>& records, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ParseError("annotations '" + path + "': cannot open for writing");
  for (const auto& r : records) {
    ordered_json j;
    j["video_id"] = r.video_id;
    j["duration_s"] = r.duration_s;
    j["query"] = r.query_tokens;
    if (r.gt_interval) j["gt"] = {r.gt_interval->first, r.gt_interval->second};
    os << j.dump() << "\n";
  }
  if (!os) throw ParseError("annotations '" + path + "': write failed");
}

std::vector<AnnotationRecord> read_annotations(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("annotations '" + path + "': cannot open");
  std::vector<AnnotationRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception& e) {
      throw ParseError("annotations '" + path + "' line " + std::to_string(line_no) + ": " +
                       e.what());
    }
    try {
      AnnotationRecord r;
      r.video_id = j.at("video_id").get<std::string>();
      r.duration_s = j.at("duration_s").get<double>();
      r.query_tokens = j.at("query").get<std::vector<std::string>>();
      if (j.contains("gt")) {
        const auto& g = j.at("gt");
        r.gt_interval = std::make_pair(g.at(0).get<double>(), g.at(1).get<double>());
        if (!(r.gt_interval->first < r.gt_interval->second) || r.gt_interval->first < 0.0 ||
            r.gt_interval->second > r.duration_s + 1e-9) {
          throw ParseError("ground-truth interval outside [0, duration]");
        }
      }
      out.push_back(std::move(r));
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError("annotations '" + path + "' line " + std::to_string(line_no) + ": " +
                       e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// vocabulary

Vocabulary Vocabulary::from_words(std::vector<std::string> words) {
  Vocabulary v;
  v.words = std::move(words);
  for (std::size_t i = 0; i < v.words.size(); ++i) {
    if (v.index.count(v.words[i])) {
      throw ParseError("vocabulary: duplicate token '" + v.words[i] + "'");
    }
    v.index[v.words[i]] = static_cast<std::int64_t>(i);
  }
  return v;
}

std::int64_t Vocabulary::lookup(const std::string& token) const {
  auto it = index.find(token);
  if (it == index.end()) throw VocabError("vocabulary: unknown token '" + token + "'");
  return it->second;
}

void write_vocabulary(const Vocabulary& v, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ParseError("vocabulary '" + path + "': cannot open for writing");
  for (const auto& w : v.words) os << w << "\n";
  if (!os) throw ParseError("vocabulary '" + path + "': write failed");
}

Vocabulary read_vocabulary(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("vocabulary '" + path + "': cannot open");
  std::vector<std::string> words;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    words.push_back(line);
  }
  while (!words.empty() && words.back().empty()) words.pop_back();
  return Vocabulary::from_words(std::move(words));
}

// ---------------------------------------------------------------------------
// synthetic corpus

void SyntheticSpec::validate() const {
  if (n_videos < 1 || clips_per_video < 1 || feature_dim < 1 || n_event_types < 1) {
    throw ConfigError("synthetic spec: counts must be positive");
  }
  if (noise_sigma < 0.0) throw ConfigError("synthetic spec: noise_sigma must be >= 0");
  if (phrase_len_min < 1 || phrase_len_max < phrase_len_min) {
    throw ConfigError("synthetic spec: bad phrase length range");
  }
  if (event_len_min < 1 || event_len_max < event_len_min ||
      event_len_max > clips_per_video) {
    throw ConfigError("synthetic spec: event length must fit inside the video");
  }
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw ConfigError("synthetic spec: test_fraction must lie in [0, 1)");
  }
  if (seconds_per_clip <= 0.0) throw ConfigError("synthetic spec: seconds_per_clip must be > 0");
}

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);

  // Fixed per-event prototypes (unit norm) and token phrases.
  std::vector<std::vector<double>> prototypes(static_cast<std::size_t>(spec.n_event_types));
  for (auto& proto : prototypes) {
    proto.resize(static_cast<std::size_t>(spec.feature_dim));
    double sq = 0.0;
    for (auto& v : proto) {
      v = rng.normal();
      sq += v * v;
    }
    const double norm = std::sqrt(sq);
    for (auto& v : proto) v /= norm;
  }
  std::vector<std::string> words{kBosWord};
  std::vector<std::vector<std::string>> phrases(static_cast<std::size_t>(spec.n_event_types));
  for (std::int64_t e = 0; e < spec.n_event_types; ++e) {
    const std::int64_t len = rng.uniform_int(spec.phrase_len_min, spec.phrase_len_max);
    auto& phrase = phrases[static_cast<std::size_t>(e)];
    for (std::int64_t i = 0; i < len; ++i) {
      std::string w = "w" + std::to_string(e) + "_" + std::to_string(i);
      phrase.push_back(w);
      words.push_back(std::move(w));
    }
  }

  SyntheticCorpus corpus;
  corpus.vocab = Vocabulary::from_words(std::move(words));
  for (std::int64_t v = 0; v < spec.n_videos; ++v) {
    char id_buf[32];
    std::snprintf(id_buf, sizeof id_buf, "v%04lld", static_cast<long long>(v));
    const std::string video_id(id_buf);

    const std::int64_t event = rng.uniform_int(0, spec.n_event_types - 1);
    const std::int64_t seg_len = rng.uniform_int(spec.event_len_min, spec.event_len_max);
    const std::int64_t seg_start = rng.uniform_int(0, spec.clips_per_video - seg_len);

    FeatureFile f;
    f.video_id = video_id;
    f.n_clips = spec.clips_per_video;
    f.dim = spec.feature_dim;
    f.data.resize(static_cast<std::size_t>(f.n_clips * f.dim));
    const auto& proto = prototypes[static_cast<std::size_t>(event)];
    for (std::int64_t c = 0; c < f.n_clips; ++c) {
      const bool planted = c >= seg_start && c < seg_start + seg_len;
      for (std::int64_t k = 0; k < f.dim; ++k) {
        double val = spec.noise_sigma * rng.normal();
        if (planted) val += proto[static_cast<std::size_t>(k)];
        f.data[static_cast<std::size_t>(c * f.dim + k)] = static_cast<float>(val);
      }
    }

    AnnotationRecord r;
    r.video_id = video_id;
    r.duration_s = static_cast<double>(spec.clips_per_video) * spec.seconds_per_clip;
    r.query_tokens = phrases[static_cast<std::size_t>(event)];
    r.gt_interval = std::make_pair(static_cast<double>(seg_start) * spec.seconds_per_clip,
                                   static_cast<double>(seg_start + seg_len) * spec.seconds_per_clip);

    const bool is_test = rng.uniform() < spec.test_fraction;
    corpus.features.push_back(std::move(f));
    (is_test ? corpus.test : corpus.train).push_back(std::move(r));
  }
  return corpus;
}

void write_corpus(const SyntheticCorpus& corpus, const std::string& dir) {
  fs::create_directories(fs::path(dir) / "features");
  for (const auto& f : corpus.features) {
    write_feature_file(f, (fs::path(dir) / "features" / (f.video_id + ".m2df")).string());
  }
  write_annotations(corpus.train, (fs::path(dir) / "annotations.train.txt").string());
  write_annotations(corpus.test, (fs::path(dir) / "annotations.test.txt").string());
  write_vocabulary(corpus.vocab, (fs::path(dir) / "vocab.txt").string());
}

// ---------------------------------------------------------------------------
// batching and feature access

std::vector<std::vector<TrainRecord>> make_batches(std::vector<TrainRecord> records,
                                                   std::int64_t batch_size, std::uint64_t seed) {
  if (batch_size < 1) throw UsageError("make_batches: batch_size must be >= 1");
  Rng rng(seed);
  // Fisher-Yates with our own uniform_int so the order is seed-determined.
  for (std::int64_t i = static_cast<std::int64_t>(records.size()) - 1; i > 0; --i) {
    const std::int64_t j = rng.uniform_int(0, i);
    std::swap(records[static_cast<std::size_t>(i)], records[static_cast<std::size_t>(j)]);
  }
  std::vector<std::vector<TrainRecord>> batches;
  for (std::size_t i = 0; i < records.size(); i += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(records.size(), i + static_cast<std::size_t>(batch_size));
    batches.emplace_back(records.begin() + static_cast<std::ptrdiff_t>(i),
                         records.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

const Tensor& FeatureStore::get(const std::string& video_id) {
  auto it = cache_.find(video_id);
  if (it != cache_.end()) return it->second;
  const auto path = fs::path(dir_) / "features" / (video_id + ".m2df");
  FeatureFile f = read_feature_file(path.string());
  std::vector<double> values(f.data.begin(), f.data.end());
  Tensor t = Tensor::from_data({f.n_clips, f.dim}, std::move(values));
  return cache_.emplace(video_id, std::move(t)).first->second;
}

}  // namespace m2d

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "m2d/rng.hpp"
#include "m2d/tensor.hpp"

namespace m2d {

// One query over one video. gt_interval is only ever read by evaluation;
// training code consumes TrainRecord, which does not carry it.
struct AnnotationRecord {
  std::string video_id;
  double duration_s = 0.0;
  std::vector<std::string> query_tokens;
  std::optional<std::pair<double, double>> gt_interval;
};

// The weak-supervision view: no ground-truth field exists on this type.
struct TrainRecord {
  std::string video_id;
  double duration_s = 0.0;
  std::vector<std::string> query_tokens;
};

TrainRecord to_train_view(const AnnotationRecord& r);
std::vector<TrainRecord> to_train_view(const std::vector<AnnotationRecord>& rs);

// Pre-extracted clip features of one video (f32 on disk).
struct FeatureFile {
  std::string video_id;
  std::int64_t n_clips = 0;
  std::int64_t dim = 0;
  std::vector<float> data;  // n_clips * dim, row-major
};

inline constexpr std::uint32_t kFeatureFileVersion = 1;

// Binary format: magic "M2DF", version u32, video_id (u32 length + UTF-8),
// n_clips u64, dim u64, f32 little-endian data. Round-trips byte-exactly.
void write_feature_file(const FeatureFile& f, const std::string& path);
FeatureFile read_feature_file(const std::string& path);

// Line-delimited records; fixed key order video_id, duration_s, query, gt.
void write_annotations(const std::vector<AnnotationRecord>& records, const std::string& path);
std::vector<AnnotationRecord> read_annotations(const std::string& path);

// One token per line; the line number is the index. Index 0 is reserved for
// the begin-of-sequence token.
struct Vocabulary {
  std::vector<std::string> words;
  std::unordered_map<std::string, std::int64_t> index;

  static Vocabulary from_words(std::vector<std::string> words);
  std::int64_t size() const { return static_cast<std::int64_t>(words.size()); }
  std::int64_t lookup(const std::string& token) const;  // VocabError when missing
};

void write_vocabulary(const Vocabulary& v, const std::string& path);
Vocabulary read_vocabulary(const std::string& path);

inline const char* kBosWord = "<s>";

// ---------------------------------------------------------------------------
// synthetic corpus

struct SyntheticSpec {
  std::uint64_t seed = 0;
  std::int64_t n_videos = 200;
  std::int64_t clips_per_video = 16;
  std::int64_t feature_dim = 64;
  std::int64_t n_event_types = 8;
  double noise_sigma = 0.5;
  std::int64_t phrase_len_min = 3;
  std::int64_t phrase_len_max = 6;
  std::int64_t event_len_min = 3;
  std::int64_t event_len_max = 8;
  double test_fraction = 0.2;
  double seconds_per_clip = 1.0;

  void validate() const;
};

struct SyntheticCorpus {
  std::vector<FeatureFile> features;
  std::vector<AnnotationRecord> train;
  std::vector<AnnotationRecord> test;
  Vocabulary vocab;
};

// Plants one event segment per video: clips of the segment carry a fixed
// unit-norm prototype plus Gaussian noise, the query is the event's token
// phrase, and the ground truth is the segment in seconds. Byte-deterministic
// in the seed.
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

// Writes features/<id>.m2df, annotations.train.txt, annotations.test.txt and
// vocab.txt under dir (created if needed).
void write_corpus(const SyntheticCorpus& corpus, const std::string& dir);

// ---------------------------------------------------------------------------
// batching and feature access

// Seeded shuffle into batches; the final partial batch is kept.
std::vector<std::vector<TrainRecord>> make_batches(std::vector<TrainRecord> records,
                                                   std::int64_t batch_size, std::uint64_t seed);

// Loads per-video features from <dir>/features/<id>.m2df and caches them as
// double tensors.
class FeatureStore {
 public:
  explicit FeatureStore(std::string data_dir) : dir_(std::move(data_dir)) {}
  const Tensor& get(const std::string& video_id);

 private:
  std::string dir_;
  std::unordered_map<std::string, Tensor> cache_;
};

}  // namespace m2d

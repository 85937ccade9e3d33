#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sinkflow/types.hpp"

namespace sinkflow {

// Per-element faction membership over time: labels is T x N row-major with
// values in [0, k). A fixed element set is required; churn handling is the
// caller's preprocessing problem.
struct FactionTimeline {
  int T = 0;
  int N = 0;
  int k = 0;
  std::vector<int32_t> labels;

  int32_t at(int t, int e) const { return labels[static_cast<size_t>(t) * N + e]; }
  int32_t& at(int t, int e) { return labels[static_cast<size_t>(t) * N + e]; }
  void validate() const;

  bool operator==(const FactionTimeline& o) const {
    return T == o.T && N == o.N && k == o.k && labels == o.labels;
  }
};

struct IngestResult {
  FactionTimeline timeline;
  // Empty when the file already used contiguous 0-based faction labels;
  // otherwise original -> dense label.
  std::map<int64_t, int> faction_remap;
  // Original element ids in dense order (element e in the timeline had
  // original_elements[e] in the file).
  std::vector<int64_t> original_elements;
};

// Reads the timeline CSV (header `time_step,element_id,faction_id`, integer
// cells, rows in any order). Time steps may start anywhere but must be
// consecutive; element ids are arbitrary integers. Every (t, e) cell must be
// present exactly once; the error for gaps lists the first 10 missing pairs.
IngestResult ingest(const std::string& path);
IngestResult ingest_text(const std::string& csv, const std::string& origin = "<memory>");

// Canonical form: header, then rows ordered by time then element, with dense
// 0-based ids, so ingest(write(tl)) reproduces tl bit-exactly.
std::string timeline_to_csv(const FactionTimeline& tl);
void write_timeline(const std::string& path, const FactionTimeline& tl);

// x_t[i] = count of elements in faction i at t, over N; P_t[i][j] = count of
// elements moving i -> j between t and t+1, over N. Both come from one
// integer count pass, so the marginal constraints hold at count level.
std::pair<std::vector<std::vector<double>>, std::vector<Matrix>>
build_marginals_and_plans(const FactionTimeline& tl);

// Markov chain per element. `steps` counts transitions: the produced
// timeline has steps + 1 snapshots and therefore exactly `steps` plans.
// Optional drift entries switch the kernel from a given transition index on.
struct SyntheticSpec {
  int k = 0;
  int N = 0;
  int steps = 0;
  Matrix kernel;                                 // row-stochastic k x k
  std::vector<std::pair<int, Matrix>> drift;     // (from_step, kernel), sorted
  std::vector<double> initial;                   // start marginal; empty = uniform
  uint64_t seed = 0;

  nlohmann::json to_json() const;
  static SyntheticSpec from_json(const nlohmann::json& j);
};

// Each element follows its own derived RNG stream, so output is a pure
// function of the generator spec and independent of evaluation order.
FactionTimeline generate_synthetic(const SyntheticSpec& spec);

struct SplitSpec {
  int train_len = 0, val_len = 0, test_len = 0;
};

struct IndexRange {
  int begin = 0, end = 0;
  int size() const { return end - begin; }
};

struct SplitRanges {
  IndexRange train, val, test;
};

// Contiguous chronological split over the plan sequence, train -> val ->
// test. Errors name the shortfall when the series is too short.
SplitRanges split(const std::vector<Matrix>& plans,
                  const std::vector<std::vector<double>>& marginals,
                  const SplitSpec& spec);

// Marginal/plan series JSON: { "k": int, "marginals": [[..k]..],
// "plans": [[[..k]..k]..] } plus an optional "config" echo.
void save_series(const std::string& path, int k,
                 const std::vector<std::vector<double>>& marginals,
                 const std::vector<Matrix>& plans,
                 const nlohmann::json& config = nullptr);
struct SeriesData {
  int k = 0;
  std::vector<std::vector<double>> marginals;
  std::vector<Matrix> plans;
};
SeriesData load_series(const std::string& path);

// Greedy maximum-overlap relabeling: aligns each step's labels to the
// previous step's by repeatedly matching the largest co-membership count.
// Preprocessing aid for timelines whose per-step labels carry no cross-step
// identity; not part of the prediction method itself.
FactionTimeline align_labels_greedy(const FactionTimeline& tl);

}  // namespace sinkflow

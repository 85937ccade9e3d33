#include "sinkflow/dataio.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <unordered_map>

#include "sinkflow/jsonio.hpp"
#include "sinkflow/rng.hpp"

namespace sinkflow {

namespace {

int64_t parse_int_field(const std::string& field, size_t line_no, const char* what) {
  int64_t value = 0;
  const char* first = field.data();
  const char* last = field.data() + field.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last)
    throw ParseError("line " + std::to_string(line_no) + ": " + what + " '" + field +
                     "' is not an integer");
  return value;
}

Matrix json_to_matrix(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.empty())
    throw ParseError(std::string(what) + ": expected a non-empty array of rows");
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j[0].size());
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    if (!j[i].is_array() || static_cast<int>(j[i].size()) != cols)
      throw ParseError(std::string(what) + ": row " + std::to_string(i) +
                       " has inconsistent length");
    for (int c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

void check_stochastic_rows(const Matrix& kernel, int k, const char* what) {
  if (kernel.rows() != k || kernel.cols() != k)
    throw InvalidInputError(std::string(what) + " must be " + std::to_string(k) + "x" +
                            std::to_string(k) + ", got " + std::to_string(kernel.rows()) +
                            "x" + std::to_string(kernel.cols()));
  for (int i = 0; i < k; ++i) {
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
      double v = kernel(i, j);
      if (!std::isfinite(v) || v < 0.0)
        throw InvalidInputError(std::string(what) + " row " + std::to_string(i) +
                                " has a negative or non-finite entry");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw InvalidInputError(std::string(what) + " row " + std::to_string(i) +
                              " sums to " + std::to_string(sum) + ", expected 1");
  }
}

}  // namespace

void FactionTimeline::validate() const {
  if (N < 1 || T < 1) throw InvalidInputError("timeline: need N >= 1 and T >= 1");
  if (k < 1) throw InvalidInputError("timeline: need k >= 1");
  if (labels.size() != static_cast<size_t>(T) * N)
    throw DimensionError("timeline: labels holds " + std::to_string(labels.size()) +
                         " cells, expected T*N = " + std::to_string(T * N));
  for (int32_t v : labels)
    if (v < 0 || v >= k)
      throw InvalidInputError("timeline: label " + std::to_string(v) +
                              " outside [0, " + std::to_string(k) + ")");
}

IngestResult ingest_text(const std::string& csv, const std::string& origin) {
  struct Row {
    int64_t t, e, f;
    size_t line;
  };
  std::vector<Row> rows;
  size_t line_no = 0;
  size_t pos = 0;
  bool saw_header = false;
  while (pos < csv.size()) {
    size_t eol = csv.find('\n', pos);
    if (eol == std::string::npos) eol = csv.size();
    std::string line = csv.substr(pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!saw_header) {
      if (line != "time_step,element_id,faction_id")
        throw ParseError(origin + ": line 1: expected header "
                         "'time_step,element_id,faction_id', got '" + line + "'");
      saw_header = true;
      continue;
    }
    size_t c1 = line.find(',');
    size_t c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos ||
        line.find(',', c2 + 1) != std::string::npos)
      throw ParseError(origin + ": line " + std::to_string(line_no) +
                       ": expected 3 comma-separated fields");
    Row r;
    r.t = parse_int_field(line.substr(0, c1), line_no, "time_step");
    r.e = parse_int_field(line.substr(c1 + 1, c2 - c1 - 1), line_no, "element_id");
    r.f = parse_int_field(line.substr(c2 + 1), line_no, "faction_id");
    r.line = line_no;
    rows.push_back(r);
  }
  if (!saw_header) throw ParseError(origin + ": empty file");
  if (rows.empty()) throw InvalidInputError(origin + ": no data rows");

  // Dense time and element indices. Times must be consecutive once sorted;
  // element ids are arbitrary and keep their sorted order.
  std::vector<int64_t> times, elements;
  for (const Row& r : rows) {
    times.push_back(r.t);
    elements.push_back(r.e);
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  std::sort(elements.begin(), elements.end());
  elements.erase(std::unique(elements.begin(), elements.end()), elements.end());
  for (size_t i = 1; i < times.size(); ++i)
    if (times[i] != times[i - 1] + 1)
      throw InvalidInputError(origin + ": time steps are not consecutive (" +
                              std::to_string(times[i - 1]) + " is followed by " +
                              std::to_string(times[i]) + ")");
  const int T = static_cast<int>(times.size());
  const int N = static_cast<int>(elements.size());
  const int64_t t0 = times.front();
  std::unordered_map<int64_t, int> e_index;
  e_index.reserve(elements.size());
  for (int i = 0; i < N; ++i) e_index[elements[i]] = i;

  std::vector<int64_t> raw(static_cast<size_t>(T) * N, -1);
  std::vector<size_t> cell_line(static_cast<size_t>(T) * N, 0);
  for (const Row& r : rows) {
    size_t cell = static_cast<size_t>(r.t - t0) * N + e_index[r.e];
    if (raw[cell] != -1)
      throw InvalidInputError(origin + ": line " + std::to_string(r.line) +
                              ": duplicate cell (time " + std::to_string(r.t) +
                              ", element " + std::to_string(r.e) + "), first at line " +
                              std::to_string(cell_line[cell]));
    raw[cell] = r.f;
    cell_line[cell] = r.line;
  }

  std::string gaps;
  int gap_count = 0;
  for (int t = 0; t < T && gap_count < 10; ++t)
    for (int e = 0; e < N && gap_count < 10; ++e)
      if (raw[static_cast<size_t>(t) * N + e] == -1) {
        gaps += (gap_count ? ", " : "") + std::string("(time ") +
                std::to_string(t0 + t) + ", element " + std::to_string(elements[e]) + ")";
        ++gap_count;
      }
  if (gap_count > 0)
    throw InvalidInputError(origin + ": missing cells, first up to 10: " + gaps);

  // Faction labels: keep a contiguous 0-based range as-is, remap otherwise.
  std::vector<int64_t> factions = raw;
  std::sort(factions.begin(), factions.end());
  factions.erase(std::unique(factions.begin(), factions.end()), factions.end());
  const int k = static_cast<int>(factions.size());
  bool contiguous = factions.front() == 0 && factions.back() == k - 1;

  IngestResult out;
  out.original_elements = elements;
  std::unordered_map<int64_t, int> f_index;
  if (!contiguous) {
    for (int i = 0; i < k; ++i) {
      f_index[factions[i]] = i;
      out.faction_remap[factions[i]] = i;
    }
  }
  out.timeline.T = T;
  out.timeline.N = N;
  out.timeline.k = k;
  out.timeline.labels.resize(raw.size());
  for (size_t i = 0; i < raw.size(); ++i)
    out.timeline.labels[i] =
        contiguous ? static_cast<int32_t>(raw[i]) : f_index[raw[i]];
  out.timeline.validate();
  return out;
}

IngestResult ingest(const std::string& path) {
  return ingest_text(read_text_file(path), path);
}

std::string timeline_to_csv(const FactionTimeline& tl) {
  tl.validate();
  std::string out = "time_step,element_id,faction_id\n";
  out.reserve(out.size() + static_cast<size_t>(tl.T) * tl.N * 8);
  for (int t = 0; t < tl.T; ++t)
    for (int e = 0; e < tl.N; ++e) {
      out += std::to_string(t);
      out += ',';
      out += std::to_string(e);
      out += ',';
      out += std::to_string(tl.at(t, e));
      out += '\n';
    }
  return out;
}

void write_timeline(const std::string& path, const FactionTimeline& tl) {
  atomic_write_text(path, timeline_to_csv(tl));
}

std::pair<std::vector<std::vector<double>>, std::vector<Matrix>>
build_marginals_and_plans(const FactionTimeline& tl) {
  tl.validate();
  const int k = tl.k, T = tl.T, N = tl.N;
  std::vector<std::vector<double>> marginals(T, std::vector<double>(k, 0.0));
  std::vector<Matrix> plans;
  plans.reserve(T - 1);
  std::vector<int64_t> mcount(k), pcount(static_cast<size_t>(k) * k);
  for (int t = 0; t < T; ++t) {
    std::fill(mcount.begin(), mcount.end(), 0);
    for (int e = 0; e < N; ++e) ++mcount[tl.at(t, e)];
    for (int i = 0; i < k; ++i)
      marginals[t][i] = static_cast<double>(mcount[i]) / N;
    if (t + 1 < T) {
      std::fill(pcount.begin(), pcount.end(), 0);
      for (int e = 0; e < N; ++e)
        ++pcount[static_cast<size_t>(tl.at(t, e)) * k + tl.at(t + 1, e)];
      Matrix p(k, k);
      for (size_t i = 0; i < p.size(); ++i)
        p.data()[i] = static_cast<double>(pcount[i]) / N;
      plans.push_back(std::move(p));
    }
  }
  return {std::move(marginals), std::move(plans)};
}

nlohmann::json SyntheticSpec::to_json() const {
  nlohmann::json j;
  j["k"] = k;
  j["N"] = N;
  j["steps"] = steps;
  j["seed"] = seed;
  j["kernel"] = matrix_to_json(kernel);
  if (!initial.empty()) j["initial"] = initial;
  if (!drift.empty()) {
    nlohmann::json d = nlohmann::json::array();
    for (const auto& [from_step, kern] : drift)
      d.push_back({{"from_step", from_step}, {"kernel", matrix_to_json(kern)}});
    j["drift"] = std::move(d);
  }
  return j;
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
  try {
    SyntheticSpec spec;
    spec.k = j.at("k").get<int>();
    spec.N = j.at("N").get<int>();
    spec.steps = j.at("steps").get<int>();
    spec.seed = j.at("seed").get<uint64_t>();
    spec.kernel = json_to_matrix(j.at("kernel"), "kernel");
    if (j.contains("initial")) spec.initial = j.at("initial").get<std::vector<double>>();
    if (j.contains("drift"))
      for (const auto& entry : j.at("drift"))
        spec.drift.emplace_back(entry.at("from_step").get<int>(),
                                json_to_matrix(entry.at("kernel"), "drift kernel"));
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("synthetic spec: ") + e.what());
  }
}

FactionTimeline generate_synthetic(const SyntheticSpec& spec) {
  if (spec.k < 2) throw InvalidInputError("generate_synthetic: need k >= 2");
  if (spec.N < 1) throw InvalidInputError("generate_synthetic: need N >= 1");
  if (spec.steps < 1) throw InvalidInputError("generate_synthetic: need steps >= 1");
  check_stochastic_rows(spec.kernel, spec.k, "kernel");
  for (size_t i = 0; i < spec.drift.size(); ++i) {
    check_stochastic_rows(spec.drift[i].second, spec.k, "drift kernel");
    if (spec.drift[i].first < 0)
      throw InvalidInputError("generate_synthetic: drift from_step must be >= 0");
    if (i > 0 && spec.drift[i].first <= spec.drift[i - 1].first)
      throw InvalidInputError("generate_synthetic: drift entries must be sorted by from_step");
  }
  std::vector<double> initial = spec.initial;
  if (initial.empty()) initial.assign(spec.k, 1.0 / spec.k);
  if (static_cast<int>(initial.size()) != spec.k)
    throw InvalidInputError("generate_synthetic: initial marginal has length " +
                            std::to_string(initial.size()) + ", expected " +
                            std::to_string(spec.k));
  double isum = 0.0;
  for (double v : initial) {
    if (!std::isfinite(v) || v < 0.0)
      throw InvalidInputError("generate_synthetic: initial marginal has a negative entry");
    isum += v;
  }
  if (std::abs(isum - 1.0) > 1e-9)
    throw InvalidInputError("generate_synthetic: initial marginal sums to " +
                            std::to_string(isum));

  auto kernel_at = [&](int t) -> const Matrix& {
    const Matrix* kern = &spec.kernel;
    for (const auto& [from_step, k2] : spec.drift)
      if (from_step <= t) kern = &k2;
    return *kern;
  };

  FactionTimeline tl;
  tl.T = spec.steps + 1;
  tl.N = spec.N;
  tl.k = spec.k;
  tl.labels.resize(static_cast<size_t>(tl.T) * tl.N);
  for (int e = 0; e < spec.N; ++e) {
    Rng stream = Rng::stream(spec.seed, static_cast<uint64_t>(e));
    int32_t cur = static_cast<int32_t>(stream.categorical(initial.data(), spec.k));
    tl.at(0, e) = cur;
    for (int t = 0; t < spec.steps; ++t) {
      const Matrix& kern = kernel_at(t);
      cur = static_cast<int32_t>(
          stream.categorical(kern.data() + static_cast<size_t>(cur) * spec.k, spec.k));
      tl.at(t + 1, e) = cur;
    }
  }
  return tl;
}

SplitRanges split(const std::vector<Matrix>& plans,
                  const std::vector<std::vector<double>>& marginals,
                  const SplitSpec& spec) {
  if (marginals.size() != plans.size() + 1)
    throw DimensionError("split: " + std::to_string(marginals.size()) +
                         " marginals do not fit " + std::to_string(plans.size()) +
                         " plans (need plans + 1)");
  if (spec.train_len < 1 || spec.val_len < 0 || spec.test_len < 1)
    throw ConfigError("split: need train_len >= 1, val_len >= 0, test_len >= 1");
  const int need = spec.train_len + spec.val_len + spec.test_len;
  const int have = static_cast<int>(plans.size());
  if (need > have)
    throw InvalidInputError("split: need " + std::to_string(need) + " plans (" +
                            std::to_string(spec.train_len) + "+" +
                            std::to_string(spec.val_len) + "+" +
                            std::to_string(spec.test_len) + ") but the series has " +
                            std::to_string(have));
  SplitRanges r;
  r.train = {0, spec.train_len};
  r.val = {spec.train_len, spec.train_len + spec.val_len};
  r.test = {r.val.end, need};
  return r;
}

void save_series(const std::string& path, int k,
                 const std::vector<std::vector<double>>& marginals,
                 const std::vector<Matrix>& plans, const nlohmann::json& config) {
  nlohmann::json j;
  j["k"] = k;
  nlohmann::json ms = nlohmann::json::array();
  for (const auto& m : marginals) ms.push_back(m);
  j["marginals"] = std::move(ms);
  nlohmann::json ps = nlohmann::json::array();
  for (const Matrix& p : plans) ps.push_back(matrix_to_json(p));
  j["plans"] = std::move(ps);
  if (!config.is_null()) j["config"] = config;
  atomic_write_text(path, canonical_dump(j));
}

SeriesData load_series(const std::string& path) {
  nlohmann::json j = parse_json_file(path);
  try {
    SeriesData data;
    data.k = j.at("k").get<int>();
    if (data.k < 1) throw ParseError(path + ": k must be >= 1");
    for (const auto& m : j.at("marginals")) {
      auto x = m.get<std::vector<double>>();
      if (static_cast<int>(x.size()) != data.k)
        throw ParseError(path + ": marginal length does not match k");
      data.marginals.push_back(std::move(x));
    }
    for (const auto& p : j.at("plans")) {
      Matrix m = json_to_matrix(p, "plan");
      if (m.rows() != data.k || m.cols() != data.k)
        throw ParseError(path + ": plan shape does not match k");
      data.plans.push_back(std::move(m));
    }
    if (data.marginals.size() != data.plans.size() + 1)
      throw ParseError(path + ": expected one more marginal than plans, got " +
                       std::to_string(data.marginals.size()) + " vs " +
                       std::to_string(data.plans.size()));
    return data;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": malformed series: " + e.what());
  }
}

FactionTimeline align_labels_greedy(const FactionTimeline& tl) {
  tl.validate();
  FactionTimeline out = tl;
  const int k = tl.k, N = tl.N;
  std::vector<int64_t> overlap(static_cast<size_t>(k) * k);
  for (int t = 1; t < tl.T; ++t) {
    std::fill(overlap.begin(), overlap.end(), 0);
    for (int e = 0; e < N; ++e)
      ++overlap[static_cast<size_t>(out.at(t - 1, e)) * k + tl.at(t, e)];
    // Greedy assignment, largest co-membership first; ties break toward the
    // smallest previous label, then the smallest current label.
    std::vector<int> perm(k, -1);  // current label -> aligned label
    std::vector<bool> prev_used(k, false), cur_used(k, false);
    for (int round = 0; round < k; ++round) {
      int64_t best = -1;
      int bi = -1, bj = -1;
      for (int i = 0; i < k; ++i) {
        if (prev_used[i]) continue;
        for (int j = 0; j < k; ++j) {
          if (cur_used[j]) continue;
          if (overlap[static_cast<size_t>(i) * k + j] > best) {
            best = overlap[static_cast<size_t>(i) * k + j];
            bi = i;
            bj = j;
          }
        }
      }
      perm[bj] = bi;
      prev_used[bi] = true;
      cur_used[bj] = true;
    }
    for (int e = 0; e < N; ++e) out.at(t, e) = perm[tl.at(t, e)];
  }
  return out;
}

}  // namespace sinkflow

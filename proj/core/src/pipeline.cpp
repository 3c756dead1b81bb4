#include "glyco/pipeline.hpp"

#include <algorithm>
#include <numeric>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "glyco/error.hpp"
#include "glyco/rng.hpp"

namespace glyco {

std::vector<ContiguousSequence> segment(std::span<const GlucoseReading> readings,
                                        Seconds max_gap) {
  std::vector<ContiguousSequence> out;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= readings.size(); ++i) {
    bool split = i == readings.size();
    if (!split) {
      const auto& prev = readings[i - 1];
      const auto& cur = readings[i];
      if (cur.patient_id != prev.patient_id) {
        split = true;
      } else {
        const Seconds gap = cur.timestamp - prev.timestamp;
        if (gap <= 0)
          fail(ErrorKind::InvalidValue, "readings for patient " + cur.patient_id +
                                            " are not strictly increasing at timestamp " +
                                            std::to_string(cur.timestamp));
        split = gap > max_gap;
      }
    }
    if (split && i > start) {
      out.push_back(ContiguousSequence::from_readings(readings.subspan(start, i - start), max_gap));
      start = i;
    }
  }
  return out;
}

std::size_t window_count(std::size_t length, std::size_t total, std::size_t step) {
  if (step == 0) fail(ErrorKind::InvalidValue, "window step must be positive");
  if (total == 0) fail(ErrorKind::InvalidValue, "window size must be positive");
  if (length < total) return 0;
  return (length - total) / step + 1;
}

std::vector<Example> window(const ContiguousSequence& sequence, std::size_t sequence_id,
                            const WindowSpec& spec, std::size_t step) {
  const std::size_t total = spec.total();
  const std::size_t n = window_count(sequence.size(), total, step);
  std::vector<Example> out;
  out.reserve(n);
  const auto& v = sequence.values();
  for (std::size_t w = 0; w < n; ++w) {
    const std::size_t off = w * step;
    Example ex;
    ex.input.assign(v.begin() + static_cast<std::ptrdiff_t>(off),
                    v.begin() + static_cast<std::ptrdiff_t>(off + spec.input_len));
    ex.target.assign(v.begin() + static_cast<std::ptrdiff_t>(off + spec.input_len),
                     v.begin() + static_cast<std::ptrdiff_t>(off + total));
    ex.source_sequence_id = sequence_id;
    ex.offset = off;
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<FoldSplit> kfold_split(std::span<const ContiguousSequence> sequences,
                                   std::size_t k, std::uint64_t seed,
                                   std::size_t min_length) {
  if (k < 2) fail(ErrorKind::Config, "k-fold split needs k >= 2");
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < sequences.size(); ++i)
    if (sequences[i].size() >= min_length) eligible.push_back(i);
  if (eligible.size() < k)
    fail(ErrorKind::InsufficientData, "only " + std::to_string(eligible.size()) +
                                          " eligible sequences for " + std::to_string(k) +
                                          " folds");
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(eligible));

  std::vector<std::vector<std::size_t>> buckets(k);
  for (std::size_t j = 0; j < eligible.size(); ++j) buckets[j % k].push_back(eligible[j]);

  std::vector<FoldSplit> folds(k);
  for (std::size_t f = 0; f < k; ++f) {
    folds[f].fold_index = f;
    folds[f].seed = seed;
    folds[f].test_sequence_ids = buckets[f];
    for (std::size_t g = 0; g < k; ++g)
      if (g != f)
        folds[f].train_sequence_ids.insert(folds[f].train_sequence_ids.end(), buckets[g].begin(),
                                           buckets[g].end());
    std::sort(folds[f].test_sequence_ids.begin(), folds[f].test_sequence_ids.end());
    std::sort(folds[f].train_sequence_ids.begin(), folds[f].train_sequence_ids.end());
  }
  return folds;
}

std::vector<ContiguousSequence> filter_cohort(std::span<const ContiguousSequence> sequences,
                                              const std::set<std::string>& patients) {
  std::vector<ContiguousSequence> out;
  for (const auto& s : sequences)
    if (patients.contains(s.patient_id())) out.push_back(s);
  if (out.empty()) fail(ErrorKind::InsufficientData, "cohort filter removed every sequence");
  return out;
}

PreparedSet prepare(std::span<const ContiguousSequence> sequences, const FoldSplit& fold,
                    const PrepareOptions& options) {
  if (options.train_step == 0 || options.test_step == 0)
    fail(ErrorKind::Config, "window steps must be positive");
  auto keep = [&](std::size_t id) {
    if (id >= sequences.size())
      fail(ErrorKind::InvalidValue, "fold references sequence " + std::to_string(id) +
                                        " but only " + std::to_string(sequences.size()) +
                                        " exist");
    return !options.cohort_filter || options.cohort_filter->contains(sequences[id].patient_id());
  };

  PreparedSet set;
  set.provenance = {fold.fold_index, options.cohort, options.train_step, options.test_step,
                    fold.seed, options.window};
  std::size_t kept = 0;
  for (std::size_t id : fold.train_sequence_ids) {
    if (!keep(id)) continue;
    ++kept;
    auto ex = window(sequences[id], id, options.window, options.train_step);
    std::move(ex.begin(), ex.end(), std::back_inserter(set.train));
  }
  for (std::size_t id : fold.test_sequence_ids) {
    if (!keep(id)) continue;
    ++kept;
    auto ex = window(sequences[id], id, options.window, options.test_step);
    std::move(ex.begin(), ex.end(), std::back_inserter(set.test));
  }
  if (kept == 0) fail(ErrorKind::InsufficientData, "cohort filter removed every sequence");
  return set;
}

namespace {

constexpr std::string_view kPrepMagic = "GLYFPREP";
constexpr std::uint32_t kPrepVersion = 1;

nlohmann::json sources(const std::vector<Example>& examples) {
  auto arr = nlohmann::json::array();
  for (const auto& e : examples) arr.push_back({e.source_sequence_id, e.offset});
  return arr;
}

}  // namespace

void save_prepared(const PreparedSet& set, const std::filesystem::path& path) {
  const auto& pv = set.provenance;
  const std::size_t in_len = pv.window.input_len;
  const std::size_t hz = pv.window.horizon;
  for (const auto* part : {&set.train, &set.test})
    for (const auto& e : *part)
      if (e.input.size() != in_len || e.target.size() != hz)
        fail(ErrorKind::Shape, "example shape does not match the window spec");

  nlohmann::json meta = {
      {"provenance",
       {{"fold", pv.fold},
        {"cohort", pv.cohort},
        {"train_step", pv.train_step},
        {"test_step", pv.test_step},
        {"seed", pv.seed}}},
      {"input_len", in_len},
      {"horizon", hz},
      {"n_train", set.train.size()},
      {"n_test", set.test.size()},
      {"layout", "train_inputs,train_targets,test_inputs,test_targets"},
      {"train_source", sources(set.train)},
      {"test_source", sources(set.test)},
  };
  const std::string meta_text = meta.dump();

  detail::ByteWriter w;
  w.bytes(kPrepMagic);
  w.u32(kPrepVersion);
  w.u64(meta_text.size());
  w.bytes(meta_text);
  for (const auto* part : {&set.train, &set.test}) {
    for (const auto& e : *part) w.f64s(e.input);
    for (const auto& e : *part) w.f64s(e.target);
  }
  detail::write_file_atomic(path, w.data());
}

PreparedSet load_prepared(const std::filesystem::path& path) {
  detail::ByteReader r(detail::read_file(path), "prepared set " + path.string());
  if (r.remaining() < kPrepMagic.size() || r.bytes(kPrepMagic.size()) != kPrepMagic)
    fail(ErrorKind::Format, path.string() + " is not a prepared-set file (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kPrepVersion)
    fail(ErrorKind::Format, "unsupported prepared-set version " + std::to_string(version));
  const std::uint64_t meta_len = r.u64();
  const auto meta_text = r.bytes(meta_len);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("prepared-set metadata: ") + e.what());
  }

  PreparedSet set;
  try {
    const auto& pv = meta.at("provenance");
    set.provenance.fold = pv.at("fold").get<std::size_t>();
    set.provenance.cohort = pv.at("cohort").get<std::string>();
    set.provenance.train_step = pv.at("train_step").get<std::size_t>();
    set.provenance.test_step = pv.at("test_step").get<std::size_t>();
    set.provenance.seed = pv.at("seed").get<std::uint64_t>();
    set.provenance.window.input_len = meta.at("input_len").get<std::size_t>();
    set.provenance.window.horizon = meta.at("horizon").get<std::size_t>();
    const auto n_train = meta.at("n_train").get<std::size_t>();
    const auto n_test = meta.at("n_test").get<std::size_t>();
    const auto& train_src = meta.at("train_source");
    const auto& test_src = meta.at("test_source");
    if (train_src.size() != n_train || test_src.size() != n_test)
      fail(ErrorKind::Format, "prepared-set source table does not match example counts");

    const std::size_t in_len = set.provenance.window.input_len;
    const std::size_t hz = set.provenance.window.horizon;
    const std::size_t expected = (n_train + n_test) * (in_len + hz) * 8;
    if (r.remaining() != expected)
      fail(ErrorKind::Format, "prepared-set payload is " + std::to_string(r.remaining()) +
                                  " bytes, expected " + std::to_string(expected));

    auto read_part = [&](std::vector<Example>& part, std::size_t n, const nlohmann::json& src) {
      part.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        part[i].source_sequence_id = src[i].at(0).get<std::size_t>();
        part[i].offset = src[i].at(1).get<std::size_t>();
        r.f64s(part[i].input, in_len);
      }
      for (std::size_t i = 0; i < n; ++i) r.f64s(part[i].target, hz);
    };
    read_part(set.train, n_train, train_src);
    read_part(set.test, n_test, test_src);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("prepared-set metadata: ") + e.what());
  }
  return set;
}

}  // namespace glyco

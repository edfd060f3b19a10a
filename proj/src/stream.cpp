#include "stream.hpp"

#include <algorithm>

#include "error.hpp"
#include "rng.hpp"

namespace curlcl {

const char* stream_mode_name(StreamMode mode) {
  switch (mode) {
    case StreamMode::iid: return "iid";
    case StreamMode::sequential: return "sequential";
    case StreamMode::continuous_drift: return "continuous_drift";
    case StreamMode::split_task: return "split_task";
  }
  return "?";
}

StreamMode parse_stream_mode(const std::string& text) {
  if (text == "iid") return StreamMode::iid;
  if (text == "sequential") return StreamMode::sequential;
  if (text == "continuous_drift" || text == "drift") return StreamMode::continuous_drift;
  if (text == "split_task") return StreamMode::split_task;
  throw Error(ErrorCode::config, "unknown stream mode '" + text +
                                     "' (iid, sequential, continuous_drift, split_task)");
}

StreamSampler::StreamSampler(StreamSpec spec, const Dataset& data, std::uint64_t seed)
    : spec_(std::move(spec)), data_(data), seed_(seed) {
  if (data.size() == 0) throw Error(ErrorCode::argument, "stream: empty dataset");
  if (spec_.batch_size == 0) throw Error(ErrorCode::config, "stream: batch size must be positive");
  if (spec_.total_steps == 0) throw Error(ErrorCode::config, "stream: total steps must be positive");

  std::vector<std::vector<std::size_t>> by_class(data.num_classes);
  for (std::size_t i = 0; i < data.size(); ++i) by_class[data.labels[i]].push_back(i);
  if (spec_.class_order.empty()) {
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      if (!by_class[c].empty()) spec_.class_order.push_back(c);
    }
  }
  auto members = [&](std::size_t c) -> const std::vector<std::size_t>& {
    if (c >= by_class.size() || by_class[c].empty()) {
      throw Error(ErrorCode::config, "stream: class " + std::to_string(c) + " has no examples");
    }
    return by_class[c];
  };

  all_.resize(data.size());
  for (std::size_t i = 0; i < all_.size(); ++i) all_[i] = i;
  switch (spec_.mode) {
    case StreamMode::iid:
      groups_.push_back(all_);
      break;
    case StreamMode::sequential:
    case StreamMode::continuous_drift:
      for (std::size_t c : spec_.class_order) groups_.push_back(members(c));
      break;
    case StreamMode::split_task:
      if (spec_.task_pairs.empty()) throw Error(ErrorCode::config, "stream: no task pairs");
      for (const auto& [a, b] : spec_.task_pairs) {
        std::vector<std::size_t> g = members(a);
        const auto& second = members(b);
        g.insert(g.end(), second.begin(), second.end());
        std::sort(g.begin(), g.end());
        groups_.push_back(std::move(g));
      }
      break;
  }
  if (spec_.total_steps % groups_.size() != 0) {
    throw Error(ErrorCode::config, "stream: " + std::to_string(spec_.total_steps) +
                                       " steps do not divide into " +
                                       std::to_string(groups_.size()) + " equal blocks");
  }
  block_ = spec_.total_steps / groups_.size();
  if (spec_.mode == StreamMode::continuous_drift) {
    window_ = spec_.drift_window == 0 ? block_ / 5 : spec_.drift_window;
    if (window_ > block_) throw Error(ErrorCode::config, "stream: drift window exceeds block length");
  }
}

double StreamSampler::new_class_probability(std::uint64_t step) const {
  if (spec_.mode != StreamMode::continuous_drift || window_ == 0) return 1.0;
  const std::uint64_t block = step / block_;
  const std::uint64_t t = step % block_;
  if (block == 0 || t >= window_) return 1.0;
  return static_cast<double>(t) / static_cast<double>(window_);
}

std::size_t StreamSampler::draw(std::size_t group, Rng& rng) const {
  const auto& g = groups_[group];
  return g[rng.below(g.size())];
}

std::optional<Batch> StreamSampler::next_batch(std::uint64_t step) const {
  if (step >= spec_.total_steps) return std::nullopt;
  Rng rng = Rng::derive(seed_, stream_tag::data, step);
  const std::size_t group = spec_.mode == StreamMode::iid ? 0 : step / block_;
  const double p_new = new_class_probability(step);

  Batch batch;
  batch.step = step;
  batch.x = Matrix(spec_.batch_size, data_.dim());
  batch.labels.resize(spec_.batch_size);
  for (std::size_t i = 0; i < spec_.batch_size; ++i) {
    std::size_t g = group;
    if (p_new < 1.0 && rng.uniform() >= p_new) g = group - 1;
    const std::size_t idx = draw(g, rng);
    const auto row = data_.images.row(idx);
    std::copy(row.begin(), row.end(), batch.x.row(i).begin());
    batch.labels[i] = data_.labels[idx];
  }
  return batch;
}

}  // namespace curlcl

#include "lapp/annotation/annotator.hpp"

#include <stdexcept>

namespace lapp::annot {

void AnnotatorConfig::validate() const {
  if (samples_per_pair == 0)
    throw std::invalid_argument("AnnotatorConfig: samples_per_pair must be >= 1");
  if (batch_size == 0)
    throw std::invalid_argument("AnnotatorConfig: batch_size must be >= 1");
  if (tie_tolerance < 0.0)
    throw std::invalid_argument("AnnotatorConfig: negative tie_tolerance");
  if (!(dt > 0.0)) throw std::invalid_argument("AnnotatorConfig: dt must be > 0");
  if (llm.temperature < 0.0)
    throw std::invalid_argument("AnnotatorConfig: negative temperature");
  if (llm.timeout_s <= 0.0)
    throw std::invalid_argument("AnnotatorConfig: timeout must be > 0");
}

AnnotationOutcome annotate_pairs(Annotator& backend,
                                 std::span<const SegmentPair> pairs,
                                 std::size_t batch_size) {
  if (batch_size == 0)
    throw std::invalid_argument("annotate_pairs: batch_size must be >= 1");
  AnnotationOutcome out;
  out.raw.reserve(pairs.size());
  for (std::size_t off = 0; off < pairs.size(); off += batch_size) {
    const std::size_t n = std::min(batch_size, pairs.size() - off);
    std::vector<RawLabel> labels = backend.annotate(pairs.subspan(off, n));
    if (labels.size() != n)
      throw std::logic_error("annotator returned " +
                             std::to_string(labels.size()) + " labels for " +
                             std::to_string(n) + " pairs");
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t idx = off + i;
      out.raw.push_back(labels[i]);
      if (auto y = map_label(labels[i])) {
        pref::PreferenceTriple tr;
        tr.a = pairs[idx].a;
        tr.b = pairs[idx].b;
        tr.y = *y;
        out.triples.push_back(std::move(tr));
      } else {
        out.discarded.push_back(idx);
      }
    }
  }
  return out;
}

}  // namespace lapp::annot

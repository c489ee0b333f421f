#pragma once

// Finite carriers, coarse-graining maps and kernel pushforward.

#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ga/score.hpp"
#include "ga/types.hpp"

namespace ga {

class Carrier {
 public:
  Carrier(std::string id, std::vector<std::string> labels) : id_(std::move(id)), labels_(std::move(labels)) {
    require(!labels_.empty(), Errc::InvalidArgument, "carrier '" + id_ + "' has no labels");
    std::set<std::string> seen;
    for (const auto& l : labels_)
      require(seen.insert(l).second, Errc::InvalidArgument, "carrier '" + id_ + "' repeats label '" + l + "'");
  }

  /// Carrier with labels "0", "1", ..., "n-1".
  static Carrier indexed(std::string id, Index n) {
    std::vector<std::string> labels;
    for (Index i = 0; i < n; ++i) labels.push_back(std::to_string(i));
    return Carrier(std::move(id), std::move(labels));
  }

  const std::string& id() const { return id_; }
  const std::vector<std::string>& labels() const { return labels_; }
  Index size() const { return static_cast<Index>(labels_.size()); }

  Index index_of(const std::string& label) const {
    for (std::size_t i = 0; i < labels_.size(); ++i)
      if (labels_[i] == label) return static_cast<Index>(i);
    throw Error(Errc::IndexOutOfRange, "label '" + label + "' not in carrier '" + id_ + "'");
  }

 private:
  std::string id_;
  std::vector<std::string> labels_;
};

/// Surjective factor map from a fine carrier onto a coarse one.
class RefinementMap {
 public:
  RefinementMap(std::string fine, std::string coarse, std::vector<Index> map, Index coarse_size)
      : fine_(std::move(fine)), coarse_(std::move(coarse)), map_(std::move(map)), coarse_size_(coarse_size) {
    require(coarse_size_ >= 1, Errc::InvalidArgument, "coarse carrier must be nonempty");
    std::vector<bool> hit(static_cast<std::size_t>(coarse_size_), false);
    for (std::size_t i = 0; i < map_.size(); ++i) {
      require(map_[i] >= 0 && map_[i] < coarse_size_, Errc::IndexOutOfRange,
              "refinement entry out of coarse range", static_cast<Index>(i));
      hit[static_cast<std::size_t>(map_[i])] = true;
    }
    for (std::size_t c = 0; c < hit.size(); ++c)
      require(hit[c], Errc::InvalidArgument, "refinement is not surjective; coarse label has no preimage",
              static_cast<Index>(c));
  }

  RefinementMap(const Carrier& fine, const Carrier& coarse, std::vector<Index> map)
      : RefinementMap(fine.id(), coarse.id(), std::move(map), coarse.size()) {
    require(static_cast<Index>(map_.size()) == fine.size(), Errc::CarrierMismatch,
            "refinement length differs from fine carrier size");
  }

  static RefinementMap identity(const std::string& id, Index n) {
    std::vector<Index> m(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) m[static_cast<std::size_t>(i)] = i;
    return RefinementMap(id, id, std::move(m), n);
  }

  const std::string& fine() const { return fine_; }
  const std::string& coarse() const { return coarse_; }
  const std::vector<Index>& map() const { return map_; }
  Index fine_size() const { return static_cast<Index>(map_.size()); }
  Index coarse_size() const { return coarse_size_; }
  Index operator()(Index i) const { return map_[static_cast<std::size_t>(i)]; }

 private:
  std::string fine_;
  std::string coarse_;
  std::vector<Index> map_;
  Index coarse_size_;
};

/// outer after inner: fine(inner) -> coarse(outer).
inline RefinementMap compose_refinement(const RefinementMap& outer, const RefinementMap& inner) {
  require(inner.coarse() == outer.fine() && inner.coarse_size() == outer.fine_size(), Errc::CarrierMismatch,
          "cannot chain '" + inner.fine() + "->" + inner.coarse() + "' into '" + outer.fine() + "->" +
              outer.coarse() + "'");
  std::vector<Index> m(inner.map().size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = outer(inner.map()[i]);
  return RefinementMap(inner.fine(), outer.coarse(), std::move(m), outer.coarse_size());
}

/// Sum aggregation of admissible fine entries into coarse cells. The coarse
/// mask is the strict support of the result.
template <typename Scalar>
EvidenceKernel<Scalar> pushforward_kernel(const EvidenceKernel<Scalar>& k, const RefinementMap& row_map,
                                          const RefinementMap& col_map) {
  require(k.rows() == row_map.fine_size() && k.cols() == col_map.fine_size(), Errc::CarrierMismatch,
          "kernel shape " + shape_string(k.rows(), k.cols()) + " does not match refinement domains " +
              shape_string(row_map.fine_size(), col_map.fine_size()));
  require_shape(k.mask, k.rows(), k.cols(), "kernel mask");
  Mat<Scalar> coarse = Mat<Scalar>::Zero(row_map.coarse_size(), col_map.coarse_size());
  for (Index j = 0; j < k.cols(); ++j)
    for (Index i = 0; i < k.rows(); ++i)
      if (k.mask(i, j)) coarse(row_map(i), col_map(j)) += k.values(i, j);
  return EvidenceKernel<Scalar>::from_values(std::move(coarse));
}

struct BranchLabel {
  std::string tag;
  std::string label;
  bool operator==(const BranchLabel&) const = default;
};

/// Disjoint union of tagged carriers, flattened branch-major.
class BranchCarrier {
 public:
  explicit BranchCarrier(std::vector<std::pair<std::string, Carrier>> branches) : branches_(std::move(branches)) {
    std::set<std::string> tags;
    Index offset = 0;
    for (std::size_t b = 0; b < branches_.size(); ++b) {
      require(tags.insert(branches_[b].first).second, Errc::DuplicateTag,
              "branch tag '" + branches_[b].first + "' repeated", static_cast<Index>(b));
      offsets_.push_back(offset);
      offset += branches_[b].second.size();
    }
    size_ = offset;
  }

  Index size() const { return size_; }
  Index branch_count() const { return static_cast<Index>(branches_.size()); }
  const std::vector<std::pair<std::string, Carrier>>& branches() const { return branches_; }
  Index offset(Index branch) const { return offsets_.at(static_cast<std::size_t>(branch)); }
  Index branch_size(Index branch) const { return branches_.at(static_cast<std::size_t>(branch)).second.size(); }

  Index flatten(Index branch, Index local) const {
    require(branch >= 0 && branch < branch_count(), Errc::IndexOutOfRange, "branch index", branch);
    require(local >= 0 && local < branch_size(branch), Errc::IndexOutOfRange, "local index", local);
    return offset(branch) + local;
  }

  /// Inverse of flatten: (branch, local index).
  std::pair<Index, Index> project(Index flat) const {
    require(flat >= 0 && flat < size_, Errc::IndexOutOfRange, "flattened index", flat);
    Index b = branch_count() - 1;
    while (offsets_[static_cast<std::size_t>(b)] > flat) --b;
    return {b, flat - offsets_[static_cast<std::size_t>(b)]};
  }

  std::vector<BranchLabel> labels() const {
    std::vector<BranchLabel> out;
    out.reserve(static_cast<std::size_t>(size_));
    for (const auto& [tag, carrier] : branches_)
      for (const auto& l : carrier.labels()) out.push_back({tag, l});
    return out;
  }

 private:
  std::vector<std::pair<std::string, Carrier>> branches_;
  std::vector<Index> offsets_;
  Index size_ = 0;
};

inline BranchCarrier branch_union(std::vector<std::pair<std::string, Carrier>> branches) {
  return BranchCarrier(std::move(branches));
}

}  // namespace ga

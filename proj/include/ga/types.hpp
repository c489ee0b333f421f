#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace ga {

using Index = Eigen::Index;

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// true = admissible pair; false = hard exclusion.
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

enum class Errc {
  CarrierMismatch,
  ShapeMismatch,
  DuplicateTag,
  NonPositiveLinkValue,
  EmptyRow,
  EmptyCol,
  Infeasible,
  NotConverged,
  ZeroMarginal,
  NonPositiveScaling,
  MaskMismatch,
  MaskedInputRejected,
  ZeroRowMass,
  MissingPotential,
  NotACycle,
  NoConvergence,
  RankOutOfRange,
  SingularChartMap,
  MissingAlignment,
  AlignmentTooLarge,
  GateNotStochastic,
  NegativeGate,
  NonSquareMask,
  IndexOutOfRange,
  InvalidArgument,
  ConfigInvalid,
  UnknownSuite,
};

constexpr const char* to_string(Errc code) noexcept {
  switch (code) {
    case Errc::CarrierMismatch: return "CarrierMismatch";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::DuplicateTag: return "DuplicateTag";
    case Errc::NonPositiveLinkValue: return "NonPositiveLinkValue";
    case Errc::EmptyRow: return "EmptyRow";
    case Errc::EmptyCol: return "EmptyCol";
    case Errc::Infeasible: return "Infeasible";
    case Errc::NotConverged: return "NotConverged";
    case Errc::ZeroMarginal: return "ZeroMarginal";
    case Errc::NonPositiveScaling: return "NonPositiveScaling";
    case Errc::MaskMismatch: return "MaskMismatch";
    case Errc::MaskedInputRejected: return "MaskedInputRejected";
    case Errc::ZeroRowMass: return "ZeroRowMass";
    case Errc::MissingPotential: return "MissingPotential";
    case Errc::NotACycle: return "NotACycle";
    case Errc::NoConvergence: return "NoConvergence";
    case Errc::RankOutOfRange: return "RankOutOfRange";
    case Errc::SingularChartMap: return "SingularChartMap";
    case Errc::MissingAlignment: return "MissingAlignment";
    case Errc::AlignmentTooLarge: return "AlignmentTooLarge";
    case Errc::GateNotStochastic: return "GateNotStochastic";
    case Errc::NegativeGate: return "NegativeGate";
    case Errc::NonSquareMask: return "NonSquareMask";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::ConfigInvalid: return "ConfigInvalid";
    case Errc::UnknownSuite: return "UnknownSuite";
  }
  return "Unknown";
}

/// Every failure raised by the library. `index()` carries the offending row,
/// column or edge when one exists, otherwise -1.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message, Index index = -1)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        index_(index) {}

  Errc code() const noexcept { return code_; }
  Index index() const noexcept { return index_; }

 private:
  Errc code_;
  Index index_;
};

inline void require(bool condition, Errc code, const std::string& message, Index index = -1) {
  if (!condition) throw Error(code, message, index);
}

inline Mask full_mask(Index rows, Index cols) { return Mask::Constant(rows, cols, true); }

inline std::string shape_string(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

template <typename Derived>
void require_shape(const Eigen::DenseBase<Derived>& m, Index rows, Index cols, const std::string& what) {
  require(m.rows() == rows && m.cols() == cols, Errc::ShapeMismatch,
          what + " has shape " + shape_string(m.rows(), m.cols()) + ", expected " +
              shape_string(rows, cols));
}

}  // namespace ga

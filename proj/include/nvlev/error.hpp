#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace nvlev {

/// Failure categories raised by the library. Every thrown nvlev::Error
/// carries exactly one of these.
enum class Errc {
  InvalidArgument,
  StepTooLarge,
  NonHermitian,
  ZeroGyromagneticRatio,
  PathTooCoarse,
  NoPeakFound,
  GridTooNarrow,
  NoHalfCrossing,
  ConvergenceFailure,
  DegenerateGuess,
  OutOfValidityRange,
  NoRootInWindow,
  NoBracket,
  ZeroDamping,
  SingularDesign,
  OffResonance,
  TooFewSegments,
  PeakNotResolved,
  NoSolution,
  UnknownKey,
  MissingUnit,
  BadValue,
};

constexpr std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::StepTooLarge: return "StepTooLarge";
    case Errc::NonHermitian: return "NonHermitian";
    case Errc::ZeroGyromagneticRatio: return "ZeroGyromagneticRatio";
    case Errc::PathTooCoarse: return "PathTooCoarse";
    case Errc::NoPeakFound: return "NoPeakFound";
    case Errc::GridTooNarrow: return "GridTooNarrow";
    case Errc::NoHalfCrossing: return "NoHalfCrossing";
    case Errc::ConvergenceFailure: return "ConvergenceFailure";
    case Errc::DegenerateGuess: return "DegenerateGuess";
    case Errc::OutOfValidityRange: return "OutOfValidityRange";
    case Errc::NoRootInWindow: return "NoRootInWindow";
    case Errc::NoBracket: return "NoBracket";
    case Errc::ZeroDamping: return "ZeroDamping";
    case Errc::SingularDesign: return "SingularDesign";
    case Errc::OffResonance: return "OffResonance";
    case Errc::TooFewSegments: return "TooFewSegments";
    case Errc::PeakNotResolved: return "PeakNotResolved";
    case Errc::NoSolution: return "NoSolution";
    case Errc::UnknownKey: return "UnknownKey";
    case Errc::MissingUnit: return "MissingUnit";
    case Errc::BadValue: return "BadValue";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message, std::string key = {})
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        key_(std::move(key)) {}

  Errc code() const noexcept { return code_; }

  /// Offending configuration key, empty for non-configuration errors.
  const std::string& key() const noexcept { return key_; }

 private:
  Errc code_;
  std::string key_;
};

inline void require(bool condition, Errc code, const std::string& message) {
  if (!condition) throw Error(code, message);
}

}  // namespace nvlev

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mdr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised by the experiment harness; carries the name of the failing stage.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("[" + stage + "] " + what), stage_(std::move(stage)) {}

  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

using TokenId = std::uint32_t;

enum class PairKind { nsp, ic };

inline const char* to_string(PairKind kind) { return kind == PairKind::nsp ? "nsp" : "ic"; }

inline PairKind parse_pair_kind(const std::string& s) {
  if (s == "nsp" || s == "NSP") return PairKind::nsp;
  if (s == "ic" || s == "IC") return PairKind::ic;
  throw Error("unknown task '" + s + "' (expected nsp or ic)");
}

}  // namespace mdr

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace empa {

enum class Errc {
  InvalidObject,
  Malformed,
  UnsupportedVersion,
  RuntimeFault,
  LinkBusy,
  FaultOrphan,
  ModelMismatch,
  NoReservedCore,
  InvalidConfig,
  IncompleteTrace,
  NotClean,
  Domain,
  Underdetermined,
  Io,
  Parse,
  HeaderMismatch,
  BadParams,
};

std::string_view to_string(Errc code);

// All library failures surface as this exception; the code is the stable part.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace empa

#pragma once

#include <stdexcept>
#include <string>

namespace wmseg {

// Every module error carries a dotted machine-readable code, e.g. "io.missing",
// "coupling.invalid", "transport.infeasible". The CLI turns these into error JSON.
class Error : public std::runtime_error {
  public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

  private:
    std::string code_;
};

} // namespace wmseg

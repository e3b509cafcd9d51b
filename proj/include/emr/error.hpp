#pragma once

#include <stdexcept>
#include <string>

namespace emr {

// Every engine failure carries a stable code (e.g. "MalformedCorpus",
// "UnresolvedConflicts") that the service maps onto HTTP status codes and the
// harness prints verbatim.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

}  // namespace emr

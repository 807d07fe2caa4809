/*******************************************************************************
* Copyright 2026 The convsel Authors
*
* Licensed under the Apache License, Version 2.0 (the "License");
* you may not use this file except in compliance with the License.
* You may obtain a copy of the License at
*
*     http://www.apache.org/licenses/LICENSE-2.0
*
* Unless required by applicable law or agreed to in writing, software
* distributed under the License is distributed on an "AS IS" BASIS,
* WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
* See the License for the specific language governing permissions and
* limitations under the License.
*******************************************************************************/

#ifndef CONVSEL_ERROR_HPP
#define CONVSEL_ERROR_HPP

#include <iostream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace convsel {

enum class ErrorKind {
    invalid_config,
    lookup,
    invalid_assignment,
    shape,
    applicability,
    layout,
    size,
    domain,
    training,
    coverage,
    compatibility,
    io,
    usage,
    resource,
};

inline const char *to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::invalid_config: return "invalid-config";
        case ErrorKind::lookup: return "lookup";
        case ErrorKind::invalid_assignment: return "invalid-assignment";
        case ErrorKind::shape: return "shape";
        case ErrorKind::applicability: return "applicability";
        case ErrorKind::layout: return "layout";
        case ErrorKind::size: return "size";
        case ErrorKind::domain: return "domain";
        case ErrorKind::training: return "training";
        case ErrorKind::coverage: return "coverage";
        case ErrorKind::compatibility: return "compatibility";
        case ErrorKind::io: return "io";
        case ErrorKind::usage: return "usage";
        case ErrorKind::resource: return "resource";
    }
    return "unknown";
}

// Every failure raised by the library carries a kind so the CLI can map it
// onto a stable exit code.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string &what)
        : std::runtime_error(std::string(to_string(kind)) + " error: " + what)
        , kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string &what) {
    throw Error(kind, what);
}

inline void warn(std::string_view msg) {
    std::cerr << "convsel: warning: " << msg << '\n';
}

} // namespace convsel

#endif // CONVSEL_ERROR_HPP

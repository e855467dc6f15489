// Copyright 2026 the voxfv authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef VOXFV_COMMON_HPP_
#define VOXFV_COMMON_HPP_

#include <bit>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

namespace voxfv {

static_assert(std::endian::native == std::endian::little,
              "voxfv file formats assume a little-endian host");

// Error taxonomy shared by the whole library. Kinds up to and including
// kParam describe bad inputs (a CLI maps them to exit code 2); the rest
// are internal failures (exit code 1).
enum class ErrorKind {
  kFormat,       // malformed or unsupported file contents
  kConfig,       // inconsistent configuration
  kShape,        // dimension mismatch between arguments
  kState,        // operation applied in the wrong order
  kData,         // input data violates an operation precondition
  kParam,        // parameter outside its documented range
  kConvergence,  // iterative procedure failed to converge
  kInternal,
};

inline const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kState: return "state";
    case ErrorKind::kData: return "data";
    case ErrorKind::kParam: return "param";
    case ErrorKind::kConvergence: return "convergence";
    case ErrorKind::kInternal: return "internal";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(std::string(error_kind_name(kind)) + " error: " + msg),
        kind_(kind) {}

  ErrorKind kind() const { return kind_; }

  // True for errors caused by caller-supplied inputs rather than
  // internal failures.
  bool is_validation() const {
    return kind_ != ErrorKind::kConvergence && kind_ != ErrorKind::kInternal;
  }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_error(ErrorKind kind, const std::string& msg) {
  throw Error(kind, msg);
}

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) throw_error(kind, msg);
}

// FNV-1a 64-bit content hash, as a hex string. Used to tie derived
// artifacts to the model that produced them.
inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

}  // namespace voxfv

#endif  // VOXFV_COMMON_HPP_

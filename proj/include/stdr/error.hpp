#pragma once

#include <stdexcept>
#include <string>

namespace stdr {

/// Failure category. The CLI maps each kind onto a process exit code.
enum class ErrorKind {
  usage,        // bad arguments / precondition violations
  input_format, // unparseable or structurally invalid input
  numerical,    // eigensolver failure, degenerate matrices
  subprocess,   // external subroutine failure
  io,           // filesystem
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Newick syntax error; carries the byte offset of the offending character.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t offset)
      : Error(ErrorKind::input_format,
              what + " at byte " + std::to_string(offset)),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Tree violates the binary unrooted invariants (or a surgery precondition).
class StructuralError : public Error {
 public:
  explicit StructuralError(const std::string& what)
      : Error(ErrorKind::input_format, what) {}
};

/// A partition or block that cannot be split/scored (one-signed vector, zero block).
class DegenerateError : public Error {
 public:
  explicit DegenerateError(const std::string& what)
      : Error(ErrorKind::numerical, what) {}
};

/// Graph Laplacian with (numerically) zero algebraic connectivity.
class DisconnectedGraphError : public Error {
 public:
  explicit DisconnectedGraphError(const std::string& what)
      : Error(ErrorKind::numerical, what) {}
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what)
      : Error(ErrorKind::numerical, what) {}
};

class SubprocessError : public Error {
 public:
  SubprocessError(const std::string& what, std::string output = {})
      : Error(ErrorKind::subprocess, what), output_(std::move(output)) {}
  const std::string& output() const noexcept { return output_; }

 private:
  std::string output_;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw Error(ErrorKind::usage, what);
}

}  // namespace stdr

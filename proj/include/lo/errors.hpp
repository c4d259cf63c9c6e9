#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace lo {

// Base for all library errors. `name()` is the stable identifier surfaced
// by the CLI; `what()` carries the human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(std::string name, const std::string& msg)
      : std::runtime_error(name + ": " + msg), name_(std::move(name)) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

#define LO_ERROR_TYPE(Name)                                             \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& msg) : Error(#Name, msg) {}        \
  }

LO_ERROR_TYPE(MalformedScan);
LO_ERROR_TYPE(MalformedPose);
LO_ERROR_TYPE(MalformedCalib);
LO_ERROR_TYPE(TooFewPoints);
LO_ERROR_TYPE(EmptyCloud);
LO_ERROR_TYPE(ShapeMismatch);
LO_ERROR_TYPE(DegenerateBatch);
LO_ERROR_TYPE(LengthMismatch);
LO_ERROR_TYPE(DivergedLoss);
LO_ERROR_TYPE(NonFiniteValue);
LO_ERROR_TYPE(MalformedCheckpoint);
LO_ERROR_TYPE(InvalidConfig);

#undef LO_ERROR_TYPE

}  // namespace lo

#pragma once

#include <stdexcept>
#include <string>

namespace nlr {

// Every error raised by the library derives from Error; the message is
// prefixed with the owning module, e.g. "tracer: ...".
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define NLR_DECLARE_ERROR(Name)        \
  class Name : public Error {          \
   public:                             \
    using Error::Error;                \
  }

NLR_DECLARE_ERROR(SingularMatrix);
NLR_DECLARE_ERROR(DimensionMismatch);
NLR_DECLARE_ERROR(NonFinite);
NLR_DECLARE_ERROR(DegenerateNormal);
NLR_DECLARE_ERROR(EmptyScene);
NLR_DECLARE_ERROR(ParseError);
NLR_DECLARE_ERROR(MissingFile);
NLR_DECLARE_ERROR(EmptyMesh);
NLR_DECLARE_ERROR(EmptyMask);
NLR_DECLARE_ERROR(DegenerateLayout);
NLR_DECLARE_ERROR(InvalidArgument);
NLR_DECLARE_ERROR(IoError);

#undef NLR_DECLARE_ERROR

}  // namespace nlr

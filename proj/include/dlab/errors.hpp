#pragma once

#include <stdexcept>
#include <string>

namespace dlab {

/// Base of every error raised by the library. Callers that only care that
/// an operation was rejected can catch this; tests match the concrete type.
class lab_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DLAB_DEFINE_ERROR(Name)                                   \
  class Name : public lab_error {                                 \
   public:                                                        \
    explicit Name(const std::string& what) : lab_error(what) {}   \
  }

// poly_roots
DLAB_DEFINE_ERROR(ZeroPolynomial);
DLAB_DEFINE_ERROR(ParseError);

// perm_lab
DLAB_DEFINE_ERROR(AllEqual);
DLAB_DEFINE_ERROR(TooLarge);
DLAB_DEFINE_ERROR(ExactnessRequired);
DLAB_DEFINE_ERROR(LengthTooSmall);
DLAB_DEFINE_ERROR(InvalidArgument);

// density_lab
DLAB_DEFINE_ERROR(TooManyTerms);
DLAB_DEFINE_ERROR(ZeroWeight);
DLAB_DEFINE_ERROR(QuadratureFailure);
DLAB_DEFINE_ERROR(TiedCoordinates);
DLAB_DEFINE_ERROR(AllZero);

// xp_harness
DLAB_DEFINE_ERROR(ConfigError);

#undef DLAB_DEFINE_ERROR

}  // namespace dlab

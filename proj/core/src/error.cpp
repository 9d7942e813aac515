#include "robustcast/error.hpp"

namespace robustcast {

int exit_code_for(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Data:
      return 2;
    case ErrorKind::Model:
    case ErrorKind::Protocol:
      return 3;
    case ErrorKind::DegradationUndefined:
      return 4;
  }
  return 1;
}

}  // namespace robustcast

#include "probsal/rng.hpp"

#include <sstream>

#include "probsal/error.hpp"

namespace probsal {

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_ << ' ' << normal_;
  return os.str();
}

void Rng::set_state(const std::string& s) {
  std::istringstream is(s);
  is >> engine_ >> normal_;
  if (!is) throw FormatError("malformed rng state");
}

}  // namespace probsal

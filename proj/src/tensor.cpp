#include "uvlm/tensor.hpp"

namespace uvlm {

thread_local Tape* Tape::current_ = nullptr;

}  // namespace uvlm

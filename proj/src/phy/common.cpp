#include "nbiot/common.hpp"

namespace nbiot {

const char* to_string(error_code code)
{
  switch (code) {
    case error_code::wrong_length:
      return "WrongLength";
    case error_code::not_found:
      return "NotFound";
    case error_code::odd_frame:
      return "OddFrame";
    case error_code::collision:
      return "Collision";
    case error_code::no_pilots:
      return "NoPilots";
    case error_code::singular_gain:
      return "SingularGain";
    case error_code::too_short:
      return "TooShort";
    case error_code::odd_length:
      return "OddLength";
    case error_code::out_of_range:
      return "OutOfRange";
    case error_code::wrong_subframe:
      return "WrongSubframe";
    case error_code::crc_fail:
      return "CrcFail";
    case error_code::tbs_mismatch:
      return "TbsMismatch";
    case error_code::size_mismatch:
      return "SizeMismatch";
    case error_code::timeout:
      return "Timeout";
    case error_code::no_capacity:
      return "NoCapacity";
    case error_code::empty_buffer:
      return "EmptyBuffer";
    case error_code::bind_failure:
      return "BindFailure";
    case error_code::invalid_command:
      return "InvalidCommand";
    case error_code::no_signal:
      return "NoSignal";
    case error_code::invalid_config:
      return "InvalidConfig";
    case error_code::io_error:
      return "IoError";
  }
  return "Unknown";
}

void raise(error_code code, const std::string& what)
{
  throw error(code, std::string(to_string(code)) + ": " + what);
}

} // namespace nbiot

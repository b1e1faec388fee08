#pragma once

#include <boost/crc.hpp>
#include <cstdint>
#include <span>

namespace rbc::detail {

inline std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  boost::crc_32_type crc;
  crc.process_bytes(bytes.data(), bytes.size());
  return crc.checksum();
}

}  // namespace rbc::detail

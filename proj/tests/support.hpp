#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace test_support {

// Minimal Standard MIDI File writer, independent of the library's writer.
class SmfTrack {
public:
  void delta(std::uint32_t ticks) {
    std::uint8_t buf[4];
    int n = 0;
    buf[n++] = ticks & 0x7f;
    while (ticks >>= 7) buf[n++] = static_cast<std::uint8_t>(0x80 | (ticks & 0x7f));
    while (n) bytes.push_back(buf[--n]);
  }
  SmfTrack& on(std::uint32_t dt, int pitch, int vel, int ch = 0) { return ev(dt, {std::uint8_t(0x90 | ch), std::uint8_t(pitch), std::uint8_t(vel)}); }
  SmfTrack& off(std::uint32_t dt, int pitch, int ch = 0) { return ev(dt, {std::uint8_t(0x80 | ch), std::uint8_t(pitch), 64}); }
  SmfTrack& cc(std::uint32_t dt, int num, int val, int ch = 0) { return ev(dt, {std::uint8_t(0xb0 | ch), std::uint8_t(num), std::uint8_t(val)}); }
  SmfTrack& tempo(std::uint32_t dt, std::uint32_t us) {
    return ev(dt, {0xff, 0x51, 3, std::uint8_t(us >> 16), std::uint8_t(us >> 8), std::uint8_t(us)});
  }
  SmfTrack& raw(std::uint32_t dt, std::vector<std::uint8_t> b) { return ev(dt, std::move(b)); }
  SmfTrack& end(std::uint32_t dt = 0) { return ev(dt, {0xff, 0x2f, 0}); }

  std::vector<std::uint8_t> bytes;

private:
  SmfTrack& ev(std::uint32_t dt, std::vector<std::uint8_t> b) {
    delta(dt);
    bytes.insert(bytes.end(), b.begin(), b.end());
    return *this;
  }
};

inline void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::vector<std::uint8_t> smf(int format, std::uint16_t division, const std::vector<SmfTrack>& tracks) {
  std::vector<std::uint8_t> out = {'M', 'T', 'h', 'd', 0, 0, 0, 6, 0, static_cast<std::uint8_t>(format),
                                   static_cast<std::uint8_t>(tracks.size() >> 8), static_cast<std::uint8_t>(tracks.size()),
                                   static_cast<std::uint8_t>(division >> 8), static_cast<std::uint8_t>(division)};
  for (const auto& t : tracks) {
    out.insert(out.end(), {'M', 'T', 'r', 'k'});
    put32(out, static_cast<std::uint32_t>(t.bytes.size()));
    out.insert(out.end(), t.bytes.begin(), t.bytes.end());
  }
  return out;
}

inline std::string temp_path(const std::string& name) { return "/tmp/amt_test_" + name; }

}  // namespace test_support

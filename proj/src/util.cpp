#include "forge/util.hpp"

#include <cstdio>
#include <stdexcept>

namespace forge {

uint64_t derive_seed(uint64_t seed, uint64_t stream) {
    Rng r(seed ^ (stream * 0xD1B54A32D192ED03ULL));
    r.next();
    return r.next();
}

std::string to_hex(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

uint64_t from_hex(std::string_view hex) {
    if (hex.empty() || hex.size() > 16) throw std::invalid_argument("bad hex digest");
    uint64_t v = 0;
    for (char c : hex) {
        v <<= 4;
        if (c >= '0' && c <= '9') v |= static_cast<uint64_t>(c - '0');
        else if (c >= 'a' && c <= 'f') v |= static_cast<uint64_t>(c - 'a' + 10);
        else if (c >= 'A' && c <= 'F') v |= static_cast<uint64_t>(c - 'A' + 10);
        else throw std::invalid_argument("bad hex digest");
    }
    return v;
}

}  // namespace forge

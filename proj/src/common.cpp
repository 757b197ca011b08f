#include "tofclean/common.hpp"

namespace tofclean {

namespace {

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

uint64_t derive_seed(uint64_t base, std::string_view tag) {
    // FNV-1a over the tag, then two splitmix rounds against the base.
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : tag) {
        h ^= static_cast<uint8_t>(c);
        h *= 0x100000001b3ULL;
    }
    return splitmix64(splitmix64(base) ^ h);
}

}  // namespace tofclean

#ifndef CTD_VERSION_HPP
#define CTD_VERSION_HPP

namespace ctd {
inline constexpr const char* kToolVersion = "0.1.0";
}

#endif

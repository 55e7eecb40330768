#pragma once

#include "hsi/common.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace hsi::binio {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <class T>
void write(std::ostream& os, const T& value)
{
    static_assert(std::is_trivially_copyable_v<T>);
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <class T>
void write_span(std::ostream& os, std::span<const T> values)
{
    static_assert(std::is_trivially_copyable_v<T>);
    os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
}

inline void write_bytes(std::ostream& os, std::string_view bytes)
{
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Reads fail loudly: a short read means a truncated file.
template <class T>
T read(std::istream& is, const char* what)
{
    static_assert(std::is_trivially_copyable_v<T>);
    T value{};
    is.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!is) {
        throw Error(std::string("truncated file while reading ") + what);
    }
    return value;
}

template <class T>
void read_into(std::istream& is, std::span<T> out, const char* what)
{
    static_assert(std::is_trivially_copyable_v<T>);
    is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size_bytes()));
    if (!is) {
        throw Error(std::string("truncated file while reading ") + what);
    }
}

inline std::string read_bytes(std::istream& is, std::size_t n, const char* what)
{
    std::string s(n, '\0');
    is.read(s.data(), static_cast<std::streamsize>(n));
    if (!is) {
        throw Error(std::string("truncated file while reading ") + what);
    }
    return s;
}

} // namespace hsi::binio

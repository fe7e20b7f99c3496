#pragma once

#include "execrl/error.hpp"

#include <cctype>
#include <charconv>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace execrl {

// Shortest decimal form that round-trips through parse_double bit-exactly.
inline std::string format_double(double value) {
    char buffer[64];
    auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
    if (ec != std::errc{}) throw IntegrityError("format_double: conversion failed");
    return std::string(buffer, ptr);
}

inline bool try_parse_double(std::string_view text, double& out) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r'))
        text.remove_suffix(1);
    if (text.empty()) return false;
    if (text.front() == '+') text.remove_prefix(1);
    if (text == "inf") {
        out = std::numeric_limits<double>::infinity();
        return true;
    }
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    return ec == std::errc{} && ptr == text.data() + text.size();
}

inline double parse_double(std::string_view text, std::string_view what) {
    double out = 0.0;
    if (!try_parse_double(text, out))
        throw ValidationError(std::string(what) + ": not a number: '" + std::string(text) + "'");
    return out;
}

inline long long parse_int(std::string_view text, std::string_view what) {
    while (!text.empty() && (text.front() == ' ' || text.back() == ' ')) {
        if (text.front() == ' ') text.remove_prefix(1);
        if (!text.empty() && text.back() == ' ') text.remove_suffix(1);
    }
    long long out = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty())
        throw ValidationError(std::string(what) + ": not an integer: '" + std::string(text) + "'");
    return out;
}

inline std::string trim(std::string_view text) {
    std::size_t first = 0;
    std::size_t last = text.size();
    while (first < last && std::isspace(static_cast<unsigned char>(text[first]))) ++first;
    while (last > first && std::isspace(static_cast<unsigned char>(text[last - 1]))) --last;
    return std::string(text.substr(first, last - first));
}

inline std::vector<std::string> split(std::string_view text, char sep) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = text.find(sep, start);
        if (pos == std::string_view::npos) {
            parts.emplace_back(text.substr(start));
            return parts;
        }
        parts.emplace_back(text.substr(start, pos - start));
        start = pos + 1;
    }
}

// 64-bit FNV-1a. Stable across platforms; used for config provenance hashes.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t hash = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

inline std::string hex64(std::uint64_t value) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[value & 0xF];
        value >>= 4;
    }
    return out;
}

// Deterministic generator for a stream identified by (seed, ids...).
inline std::mt19937_64 make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) {
    std::vector<std::uint32_t> words;
    words.push_back(static_cast<std::uint32_t>(seed));
    words.push_back(static_cast<std::uint32_t>(seed >> 32));
    for (std::uint64_t id : stream) {
        words.push_back(static_cast<std::uint32_t>(id));
        words.push_back(static_cast<std::uint32_t>(id >> 32));
    }
    std::seed_seq seq(words.begin(), words.end());
    return std::mt19937_64(seq);
}

// Uniform in [0, 1) with 53 random bits; avoids the implementation-defined
// std::uniform_real_distribution so sampled streams are reproducible.
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace execrl

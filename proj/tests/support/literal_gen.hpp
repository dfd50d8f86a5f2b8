#pragma once

#include <random>
#include <string>

namespace testsupport {

inline std::string random_number(std::mt19937_64& rng) {
    switch (rng() % 6) {
        case 0:
            return "true";
        case 1:
            return "false";
        case 2:
            return std::to_string(static_cast<long>(rng() % 2001) - 1000);
        case 3: {
            std::string s = (rng() % 2 ? "-" : "") + std::to_string(rng() % 100) + "." + std::to_string(rng() % 100000);
            return s;
        }
        case 4:
            return std::to_string(rng() % 10) + "." + std::to_string(rng() % 1000) + (rng() % 2 ? "e" : "E") +
                   (rng() % 2 ? "-" : "+") + std::to_string(rng() % 20);
        default:
            return std::to_string(rng() % 10) + "e" + std::to_string(rng() % 5);
    }
}

inline std::string random_space(std::mt19937_64& rng) {
    static const char* spaces[] = {"", "", "", " ", "  ", "\n", "\t"};
    return spaces[rng() % 7];
}

/// Rectangular literal of random rank 0..4 with random spacing.
inline std::string random_literal(std::mt19937_64& rng, const std::vector<std::size_t>& shape, std::size_t axis = 0) {
    if (axis == shape.size()) {
        return random_number(rng);
    }
    std::string out = "[" + random_space(rng);
    for (std::size_t i = 0; i < shape[axis]; ++i) {
        if (i > 0) {
            out += random_space(rng) + "," + random_space(rng);
        }
        out += random_literal(rng, shape, axis + 1);
    }
    return out + random_space(rng) + "]";
}

inline std::vector<std::size_t> random_shape(std::mt19937_64& rng) {
    std::vector<std::size_t> shape(rng() % 5);
    for (auto& d : shape) {
        d = 1 + rng() % 4;
    }
    return shape;
}

/// Random damage: drop a character, duplicate one, or append garbage.
inline std::string mutate(std::mt19937_64& rng, std::string s) {
    const std::size_t pos = rng() % s.size();
    switch (rng() % 4) {
        case 0:
            s.erase(pos, 1);
            break;
        case 1:
            s.insert(pos, 1, s[pos]);
            break;
        case 2:
            s += rng() % 2 ? "x" : ",1";
            break;
        default:
            s.insert(pos, rng() % 2 ? "[" : "]");
            break;
    }
    return s;
}

}  // namespace testsupport

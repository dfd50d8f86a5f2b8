#include "mlwb/data/tensor_literal.hpp"

#include <cstdlib>
#include <cmath>
#include <cstdio>
#include <optional>

namespace mlwb {

namespace {

std::string path_string(const std::vector<std::size_t>& path) {
    std::string out;
    for (std::size_t i : path) {
        out += "[" + std::to_string(i) + "]";
    }
    return out;
}

class LiteralParser {
public:
    explicit LiteralParser(std::string_view text) : text_(text) {}

    Tensor parse() {
        skip_space();
        value(0);
        skip_space();
        if (pos_ != text_.size()) {
            fail("unexpected trailing characters");
        }
        return Tensor(shape_ ? *shape_ : Shape{}, std::move(values_));
    }

private:
    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError(msg + " at offset " + std::to_string(pos_), pos_, path_string(path_));
    }

    [[noreturn]] void ragged(const std::string& msg) const {
        throw ParseError("ragged tensor literal at " + (path_.empty() ? std::string("top level") : path_string(path_)) +
                             ": " + msg,
                         pos_, path_string(path_));
    }

    void skip_space() {
        while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n' ||
                                       text_[pos_] == '\r')) {
            ++pos_;
        }
    }

    bool consume_word(std::string_view w) {
        if (text_.substr(pos_, w.size()) == w) {
            pos_ += w.size();
            return true;
        }
        return false;
    }

    /// Records the extent of this nesting depth, or checks it against the first sibling's.
    void note_extent(std::size_t depth, std::optional<std::size_t> extent) {
        if (depth_kind_.size() <= depth) {
            depth_kind_.resize(depth + 1);
        }
        if (!depth_kind_[depth]) {
            depth_kind_[depth] = extent;
            return;
        }
        const std::optional<std::size_t>& known = *depth_kind_[depth];
        if (known != extent) {
            if (!known) {
                ragged("expected a number, found a list");
            }
            if (!extent) {
                ragged("expected a list of " + std::to_string(*known) + ", found a number");
            }
            ragged("expected " + std::to_string(*known) + " elements, found " + std::to_string(*extent));
        }
    }

    void value(std::size_t depth) {
        if (pos_ >= text_.size()) {
            fail("unexpected end of input");
        }
        if (text_[pos_] != '[') {
            const std::size_t start = pos_;
            const double v = scalar();
            const std::size_t end = pos_;
            pos_ = start;
            note_extent(depth, std::nullopt);
            pos_ = end;
            values_.push_back(static_cast<float>(v));
            return;
        }
        const std::size_t open = pos_;
        ++pos_;
        skip_space();
        if (pos_ < text_.size() && text_[pos_] == ']') {
            fail("empty list");
        }
        // The extent is only known after the list closes, so children are
        // checked against earlier siblings and the count is checked afterwards.
        std::size_t count = 0;
        for (;;) {
            path_.push_back(count);
            skip_space();
            value(depth + 1);
            path_.pop_back();
            ++count;
            skip_space();
            if (pos_ >= text_.size()) {
                fail("missing ']'");
            }
            if (text_[pos_] == ',') {
                ++pos_;
                continue;
            }
            if (text_[pos_] == ']') {
                ++pos_;
                break;
            }
            fail("expected ',' or ']'");
        }
        const std::size_t close = pos_;
        pos_ = open;
        note_extent(depth, count);
        pos_ = close;
        if (depth == 0) {
            build_shape();
        }
    }

    double scalar() {
        if (consume_word("true")) {
            return 1.0;
        }
        if (consume_word("false")) {
            return 0.0;
        }
        std::size_t end = pos_;
        if (end < text_.size() && text_[end] == '-') {
            ++end;
        }
        auto digits = [&] {
            const std::size_t s = end;
            while (end < text_.size() && text_[end] >= '0' && text_[end] <= '9') {
                ++end;
            }
            return end - s;
        };
        if (digits() == 0) {
            fail("expected a number, true, false or '['");
        }
        if (end < text_.size() && text_[end] == '.') {
            ++end;
            if (digits() == 0) {
                pos_ = end;
                fail("expected digits after '.'");
            }
        }
        if (end < text_.size() && (text_[end] == 'e' || text_[end] == 'E')) {
            ++end;
            if (end < text_.size() && (text_[end] == '+' || text_[end] == '-')) {
                ++end;
            }
            if (digits() == 0) {
                pos_ = end;
                fail("malformed exponent");
            }
        }
        // strtod rounds underflow toward zero; overflow past float32 is an error.
        const std::string token(text_.substr(pos_, end - pos_));
        const double v = std::strtod(token.c_str(), nullptr);
        if (!std::isfinite(static_cast<float>(v))) {
            fail("number out of range");
        }
        pos_ = end;
        return v;
    }

    void build_shape() {
        Shape s;
        for (const auto& e : depth_kind_) {
            if (*e) {
                s.push_back(**e);
            }
        }
        shape_ = s;
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    std::vector<float> values_;
    std::vector<std::size_t> path_;
    /// Per depth once seen: the list length there, or nullopt for numbers.
    std::vector<std::optional<std::optional<std::size_t>>> depth_kind_;
    std::optional<Shape> shape_;
};

void format_into(const Tensor& t, std::size_t axis, std::size_t& index, std::string& out) {
    if (axis == t.rank()) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(t[index++]));
        out += buf;
        return;
    }
    out += "[";
    for (std::size_t i = 0; i < t.dim(axis); ++i) {
        if (i > 0) {
            out += ", ";
        }
        format_into(t, axis + 1, index, out);
    }
    out += "]";
}

}  // namespace

Tensor parse_tensor_literal(std::string_view text) { return LiteralParser(text).parse(); }

std::string format_tensor_literal(const Tensor& t) {
    std::string out;
    std::size_t index = 0;
    format_into(t, 0, index, out);
    return out;
}

}  // namespace mlwb

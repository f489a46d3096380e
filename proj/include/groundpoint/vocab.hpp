#pragma once

#include <string>
#include <vector>

namespace gp {

/// Token ids of the toy language model. Fixed markers first, then digits, then color words.
class Vocab {
public:
    static constexpr int kListOpen = 0;  // <points "
    static constexpr int kListClose = 1; // ">
    static constexpr int kSep = 2;       // ", "
    static constexpr int kPatch = 3;
    static constexpr int kSubpatch = 4;
    static constexpr int kLocation = 5;
    static constexpr int kSpace = 6;
    static constexpr int kPoint = 7; // "point"
    static constexpr int kTo = 8;    // "to"
    static constexpr int kDigit0 = 9;
    static constexpr int kFirstColor = kDigit0 + 10;

    explicit Vocab(int n_colors = 8);

    int size() const { return kFirstColor + n_colors_; }
    int n_colors() const { return n_colors_; }
    static int digit(int d);
    static bool is_digit(int id) { return id >= kDigit0 && id < kDigit0 + 10; }
    static int digit_value(int id) { return id - kDigit0; }
    int color(int c) const;
    bool is_grounding(int id) const { return id == kPatch || id == kSubpatch || id == kLocation; }
    std::string to_string(int id) const;

    /// "point to <color>"
    std::vector<int> query_tokens(int color) const;

private:
    int n_colors_;
};

} // namespace gp

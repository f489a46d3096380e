#include "groundpoint/vocab.hpp"

#include "groundpoint/errors.hpp"

namespace gp {

Vocab::Vocab(int n_colors) : n_colors_(n_colors) {
    if (n_colors < 1)
        throw InvalidArgument("Vocab: need at least one color");
}

int Vocab::digit(int d) {
    if (d < 0 || d > 9)
        throw InvalidArgument("Vocab::digit: not a decimal digit");
    return kDigit0 + d;
}

int Vocab::color(int c) const {
    if (c < 0 || c >= n_colors_)
        throw InvalidArgument("Vocab::color: color out of range");
    return kFirstColor + c;
}

std::string Vocab::to_string(int id) const {
    switch (id) {
    case kListOpen: return "<points \"";
    case kListClose: return "\">";
    case kSep: return ", ";
    case kPatch: return "<PATCH>";
    case kSubpatch: return "<SUBPATCH>";
    case kLocation: return "<LOCATION>";
    case kSpace: return " ";
    case kPoint: return "point";
    case kTo: return "to";
    default: break;
    }
    if (is_digit(id))
        return std::string(1, static_cast<char>('0' + digit_value(id)));
    if (id >= kFirstColor && id < size())
        return "color" + std::to_string(id - kFirstColor);
    throw InvalidArgument("Vocab::to_string: unknown token id");
}

std::vector<int> Vocab::query_tokens(int c) const { return {kPoint, kTo, color(c)}; }

} // namespace gp

"""Slow reference implementations used as test oracles."""

from __future__ import annotations


def reduce_letters(letters, orders):
    """Normal form of a letter list [(factor, +-1), ...] by repeated local rewriting.

    Works on a flat letter list with no syllable bookkeeping: cancels x x^-1,
    and replaces runs of a finite-order generator by the shortest equivalent run.
    """
    word = list(letters)
    changed = True
    while changed:
        changed = False
        for i in range(len(word) - 1):
            (f, s), (g, t) = word[i], word[i + 1]
            if f == g and s == -t:
                del word[i : i + 2]
                changed = True
                break
        if changed:
            continue
        i = 0
        while i < len(word):
            j = i
            while j < len(word) and word[j][0] == word[i][0]:
                j += 1
            f = word[i][0]
            m = orders[f]
            if m:
                e = sum(s for _, s in word[i:j]) % m
                e = e if e <= m // 2 else e - m
                if m % 2 == 0 and abs(e) == m // 2:
                    e = abs(e)
                run = [(f, 1 if e > 0 else -1)] * abs(e)
                if run != word[i:j]:
                    word[i:j] = run
                    changed = True
                    break
            i = j
    return word


def syllables_to_letters(syl):
    out = []
    for f, e in syl:
        out.extend([(f, 1 if e > 0 else -1)] * abs(e))
    return out


def invert_letters(letters):
    return [(f, -s) for f, s in reversed(letters)]

import string


class WordGame:
    def __init__(self, secret):
        secret = self._check(secret)
        self.secret = secret
        self.guessed = set()

    @staticmethod
    def _check(word):
        if not isinstance(word, str) or len(word) != 5 or not word.isalpha():
            raise ValueError("expected a five-letter word")
        word = word.lower()
        if not lookup_word(word):
            raise ValueError("not a word: " + word)
        return word

    def unguessed_letters(self):
        return set(string.ascii_lowercase) - self.guessed

    def guess(self, word):
        word = self._check(word)
        self.guessed.update(word)
        feedback = ["?"] * 5
        remaining = {}
        for i, (g, s) in enumerate(zip(word, self.secret)):
            if g == s:
                feedback[i] = "!"
            else:
                remaining[s] = remaining.get(s, 0) + 1
        for i, g in enumerate(word):
            if feedback[i] != "!" and remaining.get(g, 0) > 0:
                feedback[i] = "X"
                remaining[g] -= 1
        return "".join(feedback)

class BudgetTracker:
    def __init__(self, starting_amount):
        self.starting_amount = starting_amount
        self.income = []
        self.expenses = []
        self.limits = {}

    def add_income(self, description, amount):
        if amount <= 0:
            raise ValueError("amount must be positive")
        self.income.append((description, amount))

    def _total(self, category):
        return sum(a for c, a, _ in self.expenses if c == category)

    def add_expense(self, category, amount, description=""):
        if amount <= 0:
            raise ValueError("amount must be positive")
        self.expenses.append((category, amount, description))
        limit = self.limits.get(category)
        if limit is not None and self._total(category) > limit:
            return "warning: spending on %s exceeds its limit of %s" % (category, limit)
        return None

    def balance(self):
        return self.starting_amount + sum(a for _, a in self.income) - sum(a for _, a, _ in self.expenses)

    def set_limit(self, category, limit):
        self.limits[category] = limit

    def report(self):
        categories = set(self.limits) | {c for c, _, _ in self.expenses}
        limited = sorted(
            (c for c in categories if c in self.limits),
            key=lambda c: (self.limits[c] - self._total(c), c),
        )
        unlimited = sorted(
            (c for c in categories if c not in self.limits),
            key=lambda c: (-self._total(c), c),
        )
        return [(c, self._total(c)) for c in limited + unlimited]

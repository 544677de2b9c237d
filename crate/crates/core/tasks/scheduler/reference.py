class Scheduler:
    def __init__(self):
        self.events = []

    def _conflicts(self, start, end, participants, location):
        for event in self.events:
            if start < event["end"] and event["start"] < end:
                if event["location"] == location:
                    return True
                if set(event["participants"]) & set(participants):
                    return True
        return False

    def add_event(self, name, start, end, participants, location):
        if end <= start:
            raise ValueError("event must end after it starts")
        if self._conflicts(start, end, participants, location):
            return False
        self.events.append({
            "name": name,
            "start": start,
            "end": end,
            "participants": list(participants),
            "location": location,
        })
        return True

    def list_events(self):
        return sorted(self.events, key=lambda e: e["start"])

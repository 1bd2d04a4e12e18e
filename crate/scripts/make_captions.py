"""Generates web-style image captions from templates.

Used to build the realistic caption sample (data/realistic_captions.txt) and
the bulk of the tokenizer conformance fixture. Deterministic for a seed.
"""
import random
import sys

SUBJECTS = [
    "man", "woman", "boy", "girl", "child", "baby", "person", "people", "couple", "family",
    "actor", "actress", "singer", "player", "tourist", "student", "chef", "farmer", "soldier",
    "dog", "cat", "horse", "bird", "puppy", "kitten", "cow", "sheep", "duck", "elephant",
    "businessman", "athlete", "artist", "musician", "bride", "groom", "team", "crowd",
]
PLURAL_SUBJECTS = [
    "people", "children", "dogs", "cats", "horses", "birds", "players", "tourists", "students",
    "friends", "cows", "sheep", "ducks", "soldiers", "musicians", "girls", "boys", "women", "men",
]
OBJECTS = [
    "ball", "bench", "car", "bike", "bicycle", "table", "chair", "tree", "flower", "house",
    "bridge", "river", "lake", "beach", "mountain", "street", "road", "field", "garden", "park",
    "guitar", "piano", "book", "phone", "laptop", "camera", "cup", "bottle", "plate", "hat",
    "umbrella", "kite", "boat", "train", "bus", "window", "door", "wall", "fence", "sofa",
    "bed", "desk", "lamp", "mirror", "cake", "pizza", "sandwich", "coffee", "apple", "banana",
    "sunset", "sky", "snow", "rain", "fountain", "statue", "tower", "castle", "church", "stadium",
    "skateboard", "surfboard", "horse", "dog", "building", "city", "forest", "desert", "island",
]
ADJECTIVES = [
    "young", "old", "little", "small", "big", "large", "beautiful", "happy", "smiling", "red",
    "blue", "green", "white", "black", "yellow", "brown", "wooden", "modern", "ancient", "famous",
    "empty", "busy", "colorful", "vintage", "snowy", "sunny", "cute", "tall", "historic", "wet",
]
VERBS_ING = [
    "sitting on", "standing near", "walking along", "running on", "riding", "holding", "playing with",
    "looking at", "carrying", "eating", "drinking", "reading", "painting", "climbing", "crossing",
    "jumping over", "lying on", "leaning against", "waiting for", "posing with", "watching",
    "throwing", "catching", "pushing", "pulling", "cleaning", "driving", "flying over",
]
PREPS = ["on", "in", "near", "under", "behind", "next to", "beside", "at", "by", "across", "above", "inside"]
PLACES = [
    "the beach", "the park", "the city", "the street", "a field", "the garden", "the kitchen",
    "the forest", "the river", "the lake", "the mountains", "the desert", "a market", "the station",
    "the stadium", "a cafe", "the office", "the snow", "the rain", "the countryside", "the airport",
]
TIMES = ["at sunset", "at night", "during the day", "in winter", "in summer", "in autumn", "in spring", "at dawn"]
EVENTS = ["the premiere", "the festival", "the game", "the match", "the ceremony", "the concert", "the awards", "the parade"]
NOUN_TOPICS = ["film", "season", "city", "event", "show", "team", "year", "tournament"]

TEMPLATES = [
    "a {adj} {subj} {verb} a {obj}",
    "a {subj} {verb} the {obj} {time}",
    "{subjs} {verb} a {adj} {obj} in {place}",
    "the {adj} {obj} {prep} {place}",
    "{subj} attends {event} of the {topic}",
    "view of {place} {time}",
    "a {adj} {obj} with a {obj2} {prep} the {obj3}",
    "illustration of a cartoon {subj} with a {obj}",
    "{adj} {subj} {verb} a {obj} {prep} {place}",
    "close up of a {adj} {obj} on a {obj2}",
    "{subjs} celebrate after winning {event}",
    "portrait of a {adj} {subj} in front of a {obj}",
    "the {subj}'s {obj} {prep} the {obj2}",
    "{subj} {verb} {place} {time}",
    "a {obj} and a {obj2} {prep} {place}",
    "aerial view of the {obj} {prep} {place}",
    "{subjs} on {place} with their {obj}s",
    "a group of {subjs} {verb} the {obj}",
    "{adj} {obj}s {prep} a {adj2} {obj2}",
    "person {verb} a {obj} {time}",
    "vector illustration of {adj} {obj}s on a {adj2} background",
    "{subj} poses with the {obj} during {event}",
]


def caption(rng):
    t = rng.choice(TEMPLATES)
    fill = dict(
        adj=rng.choice(ADJECTIVES),
        adj2=rng.choice(ADJECTIVES),
        subj=rng.choice(SUBJECTS),
        subjs=rng.choice(PLURAL_SUBJECTS),
        obj=rng.choice(OBJECTS),
        obj2=rng.choice(OBJECTS),
        obj3=rng.choice(OBJECTS),
        verb=rng.choice(VERBS_ING),
        prep=rng.choice(PREPS),
        place=rng.choice(PLACES),
        time=rng.choice(TIMES),
        event=rng.choice(EVENTS),
        topic=rng.choice(NOUN_TOPICS),
    )
    text = t.format(**fill)
    # Raw web captions: occasional capitalisation and trailing punctuation.
    r = rng.random()
    if r < 0.3:
        text = text[0].upper() + text[1:]
    if rng.random() < 0.2:
        text += rng.choice([".", " .", "!", " ..."])
    return text


def main():
    n = int(sys.argv[1]) if len(sys.argv) > 1 else 5000
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 7
    rng = random.Random(seed)
    for _ in range(n):
        print(caption(rng))


if __name__ == "__main__":
    main()

# BLOWN - wireless blockchain protocol simulator

input()
best = 0
for v in map(int, input().split()):
    if v > best:
        best = v
print(best)

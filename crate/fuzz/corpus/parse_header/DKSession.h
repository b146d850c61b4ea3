//
// Generated from the DemoKit binary.
//

@interface DKSession : NSObject
- (id)displayName;
- (void)loadItems:(id)items completion:(id)handler;
- (BOOL)isActive;
- (void)setOrigin:(struct { double x0; double x1; })origin;
- (id)statistics;
- (id)snapshotKey;
+ (id)sharedSession;
- (unsigned long long)countOfItems;
@end
